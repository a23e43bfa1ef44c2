use std::collections::BTreeSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::item::{make_item_for_target, random_sentence, Condition, IclItem, Rate, SyntaxCombo};
use super::lexicon::Lexicon;
use super::sentence::{Sentence, Syntax};
use crate::error::{Error, Result};
use crate::model::{TokenId, TrainingSequence};
use crate::prompt::{build_prompt, speech_tokens, target_continuation};
use crate::seed::derive_seed;
use crate::vocab::{Vocabulary, SPEECH_MARK, STOP_UNITS, TEXT_MARK, TEXT_STOP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub eval_targets: usize,
    pub demo_sets: usize,
    /// Largest demonstration count emitted for multi-demo conditions.
    pub max_demos: usize,
    pub conditions: Vec<Condition>,
    pub train_sequences: usize,
    pub train_max_demos: usize,
    pub icl_fraction: f64,
    pub speech_fraction: f64,
    /// Longest training sequence and longest eval prompt.
    pub max_len: usize,
    /// Share of new utterances in monomodal documents that are nonce
    /// phrases: random unit strings in speech, content-word salad in text.
    #[serde(default)]
    pub nonce_fraction: f64,
    /// Chance that a monomodal utterance repeats an earlier one.
    #[serde(default = "default_repeat_fraction")]
    pub repeat_fraction: f64,
}

fn default_repeat_fraction() -> f64 {
    0.35
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            eval_targets: 25,
            demo_sets: 4,
            max_demos: 5,
            conditions: Condition::all(),
            train_sequences: 4000,
            train_max_demos: 3,
            icl_fraction: 0.5,
            speech_fraction: 0.3,
            max_len: 512,
            nonce_fraction: 0.25,
            repeat_fraction: default_repeat_fraction(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Icl,
    SpeechOnly,
    TextOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub kind: SequenceKind,
    pub tokens: Vec<TokenId>,
}

/// One evaluation prompt: an item plus its bookkeeping and serialized tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub target_index: usize,
    pub demo_set: usize,
    pub n_demos: usize,
    pub rate: Rate,
    pub item: IclItem,
    pub prompt_tokens: Vec<TokenId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub lexicon: Lexicon,
    pub train: Vec<TrainRecord>,
    pub eval: Vec<EvalItem>,
}

impl Corpus {
    pub fn vocabulary(&self) -> Vocabulary {
        self.lexicon.vocabulary()
    }

    pub fn training_sequences(&self) -> Vec<TrainingSequence> {
        self.train
            .iter()
            .map(|r| TrainingSequence {
                tokens: r.tokens.clone(),
                loss_mask: None,
            })
            .collect()
    }

    /// Token counts over the training split.
    pub fn token_frequencies(&self) -> Vec<u64> {
        let mut f = vec![0u64; self.vocabulary().size()];
        for r in &self.train {
            for &t in &r.tokens {
                f[t as usize] += 1;
            }
        }
        f
    }

    pub fn eval_for(&self, condition: Condition) -> impl Iterator<Item = &EvalItem> {
        self.eval.iter().filter(move |e| e.item.condition == condition)
    }

    pub fn longest_sequence(&self) -> usize {
        let t = self.train.iter().map(|r| r.tokens.len());
        let e = self.eval.iter().map(|e| e.prompt_tokens.len() + 1);
        t.chain(e).max().unwrap_or(0)
    }
}

type Triple = (String, String, String);

fn triple_of(s: &Sentence) -> Triple {
    (s.agent.clone(), s.verb.clone(), s.patient.clone())
}

/// Held-out targets: distinct propositions whose words all have synonyms.
fn eval_targets(lexicon: &Lexicon, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Sentence>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..n * 1000 {
        if out.len() == n {
            break;
        }
        let s = random_sentence(lexicon, Syntax::Active, true, rng)?;
        if seen.insert(triple_of(&s)) {
            out.push(s);
        }
    }
    if out.len() < n {
        return Err(Error::Leakage(format!("lexicon supports fewer than {n} distinct eval targets")));
    }
    Ok(out)
}

fn build_eval(lexicon: &Lexicon, vocab: &Vocabulary, spec: &CorpusSpec, targets: &[Sentence]) -> Result<Vec<EvalItem>> {
    let mut out = Vec::new();
    for &condition in &spec.conditions {
        let range = condition.demo_range();
        let max_n = (*range.end()).min(spec.max_demos);
        for (ti, target) in targets.iter().enumerate() {
            for d in 0..spec.demo_sets {
                for combo in SyntaxCombo::ALL {
                    let seed = derive_seed(spec.seed, &format!("eval/{condition}/{ti}/{d}/{combo}"));
                    let full = make_item_for_target(lexicon, condition, combo, target, max_n, seed)?;
                    for n in *range.start()..=max_n {
                        let item = full.truncated(n);
                        let prompt = build_prompt(&item, lexicon, vocab, spec.max_len)?;
                        out.push(EvalItem {
                            id: format!("{condition}/t{ti}/d{d}/{combo}/n{n}"),
                            target_index: ti,
                            demo_set: d,
                            n_demos: n,
                            rate: item.rate(),
                            item,
                            prompt_tokens: prompt.tokens,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

fn pick_rate(rng: &mut ChaCha8Rng) -> Rate {
    match rng.gen_range(0..4) {
        0 => Rate::Fast,
        1 => Rate::Slow,
        _ => Rate::Core,
    }
}

/// Sentence whose proposition is not held out.
fn training_sentence(lexicon: &Lexicon, held_out: &BTreeSet<Triple>, rng: &mut ChaCha8Rng) -> Result<Sentence> {
    loop {
        let syntax = if rng.gen_bool(0.5) { Syntax::Active } else { Syntax::Passive };
        let s = random_sentence(lexicon, syntax, false, rng)?;
        if !held_out.contains(&triple_of(&s)) {
            return Ok(s);
        }
    }
}

fn icl_episode(
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    spec: &CorpusSpec,
    held_out: &BTreeSet<Triple>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TokenId>> {
    loop {
        let condition = *spec.conditions.choose(rng).expect("conditions non-empty");
        let combo = *SyntaxCombo::ALL.choose(rng).expect("non-empty");
        let n = if condition.is_overlap() { 1 } else { rng.gen_range(1..=spec.train_max_demos.max(1)) };
        let target = training_sentence(lexicon, held_out, rng)?;
        let item = match make_item_for_target(lexicon, condition, combo, &target, n, rng.gen()) {
            Ok(item) => item,
            // semantic conditions need synonym-bearing targets
            Err(Error::InvalidItem(_)) => continue,
            Err(e) => return Err(e),
        };
        if item.demonstrations.iter().any(|d| held_out.contains(&triple_of(d))) {
            continue;
        }
        for keep in (1..=item.n_demos()).rev() {
            let item = item.truncated(keep);
            let mut tokens = build_prompt(&item, lexicon, vocab, usize::MAX)?.tokens;
            tokens.extend(target_continuation(&item, lexicon, vocab)?);
            if tokens.len() <= spec.max_len {
                return Ok(tokens);
            }
        }
    }
}

/// A phrase only predictable by copying an earlier mention. Text salad
/// uses content words alone, so it cannot spell out a held-out sentence.
fn nonce_phrase(lexicon: &Lexicon, vocab: &Vocabulary, speech: bool, voice: usize, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let mut u: Vec<TokenId> = if speech {
        let lo = STOP_UNITS.len() as u16;
        (0..rng.gen_range(8..=24))
            .map(|_| vocab.speech_token(voice, rng.gen_range(lo..vocab.units_per_voice() as u16)))
            .collect()
    } else {
        let content: Vec<&String> = vocab.words().iter().filter(|w| lexicon.lemma(w).is_some()).collect();
        (0..rng.gen_range(3..=8))
            .map(|_| vocab.word_token(content.choose(rng).expect("lexicon has content words")).expect("known word"))
            .collect()
    };
    if speech {
        u.extend(vocab.stop_sequence(voice));
    } else {
        u.push(TEXT_STOP);
    }
    u
}

/// A run of utterances in one modality, some of them repeated within the document.
fn monomodal_doc(
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    spec: &CorpusSpec,
    held_out: &BTreeSet<Triple>,
    speech: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TokenId>> {
    let voice = rng.gen_range(0..vocab.n_voices());
    let rate = pick_rate(rng);
    let budget = rng.gen_range(spec.max_len / 4..=spec.max_len);
    let mut tokens = vec![if speech { SPEECH_MARK } else { TEXT_MARK }];
    let mut said: Vec<Vec<TokenId>> = Vec::new();
    loop {
        let utterance = if !said.is_empty() && rng.gen_bool(spec.repeat_fraction) {
            said.choose(rng).expect("non-empty").clone()
        } else if rng.gen_bool(spec.nonce_fraction) {
            let u = nonce_phrase(lexicon, vocab, speech, voice, rng);
            said.push(u.clone());
            u
        } else {
            let s = training_sentence(lexicon, held_out, rng)?;
            let mut u = if speech {
                speech_tokens(lexicon, vocab, &s, rate, voice)?
            } else {
                s.words.iter().map(|w| vocab.word_token(w)).collect::<Result<Vec<_>>>()?
            };
            if speech {
                u.extend(vocab.stop_sequence(voice));
            } else {
                u.push(TEXT_STOP);
            }
            said.push(u.clone());
            u
        };
        if tokens.len() + utterance.len() > budget && tokens.len() > 1 {
            break;
        }
        tokens.extend(utterance);
    }
    Ok(tokens)
}

/// Generate the training split and the evaluation items.
pub fn build_corpus(lexicon: &Lexicon, spec: &CorpusSpec) -> Result<Corpus> {
    if spec.conditions.is_empty() {
        return Err(Error::InvalidItem("corpus needs at least one condition".into()));
    }
    if !(0.0..=1.0).contains(&(spec.icl_fraction + spec.speech_fraction)) {
        return Err(Error::InvalidItem("mixture fractions must sum to at most 1".into()));
    }
    if ![spec.nonce_fraction, spec.repeat_fraction].iter().all(|f| (0.0..=1.0).contains(f)) {
        return Err(Error::InvalidItem("nonce and repeat fractions must lie in [0, 1]".into()));
    }
    let vocab = lexicon.vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "targets"));
    let targets = eval_targets(lexicon, spec.eval_targets, &mut rng)?;
    let held_out: BTreeSet<Triple> = targets.iter().map(triple_of).collect();
    let eval = build_eval(lexicon, &vocab, spec, &targets)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "train"));
    let mut train = Vec::with_capacity(spec.train_sequences);
    for _ in 0..spec.train_sequences {
        let u: f64 = rng.gen();
        let (kind, tokens) = if u < spec.icl_fraction {
            (SequenceKind::Icl, icl_episode(lexicon, &vocab, spec, &held_out, &mut rng)?)
        } else if u < spec.icl_fraction + spec.speech_fraction {
            (SequenceKind::SpeechOnly, monomodal_doc(lexicon, &vocab, spec, &held_out, true, &mut rng)?)
        } else {
            (SequenceKind::TextOnly, monomodal_doc(lexicon, &vocab, spec, &held_out, false, &mut rng)?)
        };
        train.push(TrainRecord { kind, tokens });
    }
    let corpus = Corpus {
        spec: spec.clone(),
        lexicon: lexicon.clone(),
        train,
        eval,
    };
    check_leakage(&corpus, &targets)?;
    Ok(corpus)
}

/// Fail if any held-out target's text appears in a training sequence, in any
/// syntax, tense or determiner.
fn check_leakage(corpus: &Corpus, targets: &[Sentence]) -> Result<()> {
    let vocab = corpus.vocabulary();
    let lex = &corpus.lexicon;
    let mut forbidden = Vec::new();
    for t in targets {
        for syntax in [Syntax::Active, Syntax::Passive] {
            for tense in [super::Tense::Present, super::Tense::Past] {
                for det in [super::Determiner::Definite, super::Determiner::Indefinite] {
                    let s = t.recast(lex, syntax, tense, det)?;
                    let ids: Vec<TokenId> = s.words.iter().map(|w| vocab.word_token(w)).collect::<Result<_>>()?;
                    forbidden.push((s.to_string(), ids));
                }
            }
        }
    }
    for (i, r) in corpus.train.iter().enumerate() {
        for (text, ids) in &forbidden {
            if r.tokens.windows(ids.len()).any(|w| w == ids.as_slice()) {
                return Err(Error::Leakage(format!("training sequence {i} contains held-out {text:?}")));
            }
        }
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub const LEXICON_FILE: &str = "lexicon.json";
pub const SPEC_FILE: &str = "corpus_spec.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const EVAL_FILE: &str = "eval.jsonl";

/// Write `lexicon.json`, `corpus_spec.json`, `train.jsonl` and `eval.jsonl` into `dir`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(LEXICON_FILE), serde_json::to_string_pretty(&corpus.lexicon)?)?;
    std::fs::write(dir.join(SPEC_FILE), serde_json::to_string_pretty(&corpus.spec)?)?;
    write_jsonl(&dir.join(TRAIN_FILE), &corpus.train)?;
    write_jsonl(&dir.join(EVAL_FILE), &corpus.eval)?;
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        if !p.exists() {
            return Err(Error::MissingFile(p));
        }
        Ok(std::fs::read_to_string(p)?)
    };
    let lexicon: Lexicon = serde_json::from_str(&read(LEXICON_FILE)?)?;
    lexicon.validate()?;
    let spec: CorpusSpec = serde_json::from_str(&read(SPEC_FILE)?)?;
    let corpus = Corpus {
        spec,
        lexicon,
        train: read_jsonl(&dir.join(TRAIN_FILE))?,
        eval: read_jsonl(&dir.join(EVAL_FILE))?,
    };
    for e in &corpus.eval {
        e.item.validate(&corpus.lexicon)?;
    }
    Ok(corpus)
}
