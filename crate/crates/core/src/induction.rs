//! Prefix-matching head scores.
//!
//! For a query token `t_i` whose most recent earlier occurrence is at `j`,
//! a prefix-matching head puts weight on `j + 1`, the token that followed
//! last time. The non-prefix baseline reads the weight on a uniformly drawn
//! earlier position other than `j + 1`.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, Ablation, AttentionRecord, HeadRef, Parameters, TokenId};
use crate::vocab::{Modality, Vocabulary};

/// A query position and the key position a prefix-matching head would read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Qualifying {
    pub query: usize,
    pub earlier: usize,
    pub modality: Modality,
}

impl Qualifying {
    pub fn prefix_key(&self) -> usize {
        self.earlier + 1
    }
}

/// Text and speech positions whose token occurred earlier, paired with the
/// most recent earlier occurrence. Structural positions are skipped.
pub fn qualifying_positions(tokens: &[TokenId], modality: &[Modality]) -> Vec<Qualifying> {
    let mut last: HashMap<TokenId, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, &t) in tokens.iter().enumerate() {
        if let Some(&j) = last.get(&t) {
            if modality[i] != Modality::Structural {
                out.push(Qualifying {
                    query: i,
                    earlier: j,
                    modality: modality[i],
                });
            }
        }
        last.insert(t, i);
    }
    out
}

/// Attention sums for one bucket of query tokens, one entry per head.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketSums {
    pub prefix: Vec<f64>,
    pub nonprefix: Vec<f64>,
    pub count: usize,
}

impl BucketSums {
    fn zeros(n: usize) -> Self {
        Self {
            prefix: vec![0.0; n],
            nonprefix: vec![0.0; n],
            count: 0,
        }
    }
}

/// Unnormalized per-head sums for one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptSums {
    pub speech: BucketSums,
    pub text: BucketSums,
}

impl PromptSums {
    pub fn bucket(&self, m: Modality) -> Option<&BucketSums> {
        match m {
            Modality::Speech => Some(&self.speech),
            Modality::Text => Some(&self.text),
            Modality::Structural => None,
        }
    }
}

/// Accumulate prefix and non-prefix attention for every head. One baseline
/// position is drawn per qualifying token (in position order) and shared by
/// all heads.
pub fn prompt_sums(attention: &AttentionRecord, tokens: &[TokenId], modality: &[Modality], rng: &mut impl Rng) -> PromptSums {
    let n_heads = attention.n_layers() * attention.n_heads();
    let mut out = PromptSums {
        speech: BucketSums::zeros(n_heads),
        text: BucketSums::zeros(n_heads),
    };
    for q in qualifying_positions(tokens, modality) {
        let i = q.query;
        let key = q.prefix_key();
        // uniform over 0..i without the prefix key
        let r = if key < i {
            let r = rng.gen_range(0..i - 1);
            r + usize::from(r >= key)
        } else {
            rng.gen_range(0..i)
        };
        let bucket = match q.modality {
            Modality::Speech => &mut out.speech,
            _ => &mut out.text,
        };
        bucket.count += 1;
        for l in 0..attention.n_layers() {
            for h in 0..attention.n_heads() {
                let idx = l * attention.n_heads() + h;
                bucket.prefix[idx] += attention.get(l, h, i, key);
                bucket.nonprefix[idx] += attention.get(l, h, i, r);
            }
        }
    }
    out
}

/// Per-head scores for one bucket, averaged over sequences that had any
/// qualifying token in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityScores {
    pub prefix: Vec<f64>,
    pub nonprefix: Vec<f64>,
    /// Qualifying tokens over all sequences.
    pub count: usize,
    /// Sequences contributing to the average.
    pub sequences: usize,
}

impl ModalityScores {
    fn from_prompts<'a>(n_heads: usize, buckets: impl Iterator<Item = &'a BucketSums>) -> Self {
        let mut s = Self {
            prefix: vec![0.0; n_heads],
            nonprefix: vec![0.0; n_heads],
            count: 0,
            sequences: 0,
        };
        for b in buckets.filter(|b| b.count > 0) {
            s.count += b.count;
            s.sequences += 1;
            for h in 0..n_heads {
                s.prefix[h] += b.prefix[h] / b.count as f64;
                s.nonprefix[h] += b.nonprefix[h] / b.count as f64;
            }
        }
        if s.sequences > 0 {
            let n = s.sequences as f64;
            s.prefix.iter_mut().chain(s.nonprefix.iter_mut()).for_each(|v| *v /= n);
        }
        s
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadScoreTable {
    pub n_layers: usize,
    pub n_heads: usize,
    pub speech: ModalityScores,
    pub text: ModalityScores,
    /// Both modalities pooled before normalization.
    pub pooled: ModalityScores,
    pub sequences: usize,
}

fn pooled(p: &PromptSums) -> BucketSums {
    let mut b = p.speech.clone();
    b.count += p.text.count;
    for (d, s) in b.prefix.iter_mut().zip(&p.text.prefix) {
        *d += s;
    }
    for (d, s) in b.nonprefix.iter_mut().zip(&p.text.nonprefix) {
        *d += s;
    }
    b
}

impl HeadScoreTable {
    pub fn from_prompt_sums(n_layers: usize, n_heads: usize, prompts: &[PromptSums]) -> Self {
        let n = n_layers * n_heads;
        let pooled_sums: Vec<BucketSums> = prompts.iter().map(pooled).collect();
        Self {
            n_layers,
            n_heads,
            speech: ModalityScores::from_prompts(n, prompts.iter().map(|p| &p.speech)),
            text: ModalityScores::from_prompts(n, prompts.iter().map(|p| &p.text)),
            pooled: ModalityScores::from_prompts(n, pooled_sums.iter()),
            sequences: prompts.len(),
        }
    }

    pub fn modality(&self, m: Modality) -> Option<&ModalityScores> {
        match m {
            Modality::Speech => Some(&self.speech),
            Modality::Text => Some(&self.text),
            Modality::Structural => None,
        }
    }

    fn index(&self, h: HeadRef) -> usize {
        h.layer * self.n_heads + h.head
    }

    pub fn heads(&self) -> Vec<HeadRef> {
        (0..self.n_layers)
            .flat_map(|l| (0..self.n_heads).map(move |h| HeadRef::new(l, h)))
            .collect()
    }

    /// Prefix score of `head` for `m`; `None` when no token of that modality qualified.
    pub fn prefix(&self, m: Modality, head: HeadRef) -> Option<f64> {
        self.modality(m).filter(|s| !s.is_empty()).map(|s| s.prefix[self.index(head)])
    }

    pub fn nonprefix(&self, m: Modality, head: HeadRef) -> Option<f64> {
        self.modality(m).filter(|s| !s.is_empty()).map(|s| s.nonprefix[self.index(head)])
    }

    /// `layer,head,modality,prefix_score,nonprefix_score,count`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "layer,head,modality,prefix_score,nonprefix_score,count")?;
        for (name, m) in [("speech", &self.speech), ("text", &self.text)] {
            if m.is_empty() {
                continue;
            }
            for h in self.heads() {
                let i = self.index(h);
                writeln!(w, "{},{},{name},{:.9},{:.9},{}", h.layer, h.head, m.prefix[i], m.nonprefix[i], m.count)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Layer-by-head matrix of prefix scores for one modality.
    pub fn write_heatmap_csv(&self, path: &Path, m: Modality) -> Result<()> {
        let scores = self
            .modality(m)
            .ok_or_else(|| Error::InvalidItem("structural tokens have no scores".into()))?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let cols: Vec<String> = (0..self.n_heads).map(|h| format!("h{h}")).collect();
        writeln!(w, "layer,{}", cols.join(","))?;
        for l in 0..self.n_layers {
            let row: Vec<String> = (0..self.n_heads)
                .map(|h| format!("{:.9}", scores.prefix[l * self.n_heads + h]))
                .collect();
            writeln!(w, "{l},{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn attention_of(params: &Parameters<f32>, tokens: &[TokenId]) -> Result<AttentionRecord> {
    let none = Ablation::none(&params.config);
    let out = forward(params, tokens, true, &none)?;
    Ok(out.attention.expect("attention was requested"))
}

/// Per-prompt sums from a model's attention, with the baseline RNG seeded once
/// and consumed in prompt order.
pub fn model_prompt_sums(params: &Parameters<f32>, prompts: &[(Vec<TokenId>, Vec<Modality>)], seed: u64) -> Result<Vec<PromptSums>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    prompts
        .iter()
        .map(|(tokens, modality)| Ok(prompt_sums(&attention_of(params, tokens)?, tokens, modality, &mut rng)))
        .collect()
}

/// Prefix-matching scores over interleaved prompts.
pub fn score_icl_prompts(params: &Parameters<f32>, prompts: &[(Vec<TokenId>, Vec<Modality>)], seed: u64) -> Result<HeadScoreTable> {
    let sums = model_prompt_sums(params, prompts, seed)?;
    let c = &params.config;
    Ok(HeadScoreTable::from_prompt_sums(c.n_layers, c.n_heads, &sums))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityMix {
    TextOnly,
    SpeechOnly,
    Interleaved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSequenceConfig {
    pub mix: ModalityMix,
    pub length: usize,
    pub repeats: usize,
    pub sequences: usize,
    /// Fraction of most and of least frequent tokens left out of the pool.
    pub freq_exclusion: f64,
    pub seed: u64,
}

impl Default for RandomSequenceConfig {
    fn default() -> Self {
        Self {
            mix: ModalityMix::SpeechOnly,
            length: 50,
            repeats: 4,
            sequences: 25,
            freq_exclusion: 0.04,
            seed: 0,
        }
    }
}

/// Tokens of `ids` with the most and least frequent `exclusion` fraction
/// removed. Ties in frequency are ranked by token id.
pub fn frequency_filtered(ids: &[TokenId], frequencies: &[u64], exclusion: f64) -> Vec<TokenId> {
    let mut ranked: Vec<TokenId> = ids.to_vec();
    ranked.sort_by_key(|&t| (frequencies.get(t as usize).copied().unwrap_or(0), t));
    let cut = (exclusion * ranked.len() as f64).round() as usize;
    if 2 * cut >= ranked.len() {
        return Vec::new();
    }
    let mut kept = ranked[cut..ranked.len() - cut].to_vec();
    kept.sort_unstable();
    kept
}

/// One random sequence: `length` distinct tokens repeated `repeats` times.
pub fn random_repeated_sequence(
    vocab: &Vocabulary,
    frequencies: &[u64],
    cfg: &RandomSequenceConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TokenId>> {
    let text: Vec<TokenId> = vocab.text_range().collect();
    let speech: Vec<TokenId> = vocab.speech_range().collect();
    let draw = |pool: &[TokenId], n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<TokenId>> {
        let kept = frequency_filtered(pool, frequencies, cfg.freq_exclusion);
        if kept.len() < n {
            return Err(Error::InsufficientVocabulary(format!(
                "{} tokens left after frequency exclusion, need {n}",
                kept.len()
            )));
        }
        Ok(kept.choose_multiple(rng, n).copied().collect())
    };
    let mut unit = match cfg.mix {
        ModalityMix::TextOnly => draw(&text, cfg.length, rng)?,
        ModalityMix::SpeechOnly => draw(&speech, cfg.length, rng)?,
        ModalityMix::Interleaved => {
            let half = cfg.length / 2;
            let mut v = draw(&text, half, rng)?;
            v.extend(draw(&speech, cfg.length - half, rng)?);
            v
        }
    };
    unit.shuffle(rng);
    Ok(unit.iter().copied().cycle().take(cfg.length * cfg.repeats).collect())
}

/// Olsson-style induction scores on repeated random sequences. Each head's
/// score is its mean prefix attention over all tokens after the first repeat,
/// averaged over sequences; the result is the `pooled` bucket of the table.
pub fn score_random_sequences(
    params: &Parameters<f32>,
    vocab: &Vocabulary,
    frequencies: &[u64],
    cfg: &RandomSequenceConfig,
) -> Result<HeadScoreTable> {
    let need = cfg.length * cfg.repeats;
    if params.config.max_context < need {
        return Err(Error::SequenceTooLong {
            len: need,
            max: params.config.max_context,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seqs = Vec::with_capacity(cfg.sequences);
    for _ in 0..cfg.sequences {
        let tokens = random_repeated_sequence(vocab, frequencies, cfg, &mut rng)?;
        let modality = tokens.iter().map(|&t| vocab.modality(t)).collect();
        seqs.push((tokens, modality));
    }
    score_icl_prompts(params, &seqs, cfg.seed)
}

/// Six head sets used for ablation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadGroups {
    pub k: usize,
    pub seed: u64,
    pub speech_prefix_top: BTreeSet<HeadRef>,
    pub text_prefix_top: BTreeSet<HeadRef>,
    pub speech_unique: BTreeSet<HeadRef>,
    pub text_unique: BTreeSet<HeadRef>,
    pub non_prefix_top: BTreeSet<HeadRef>,
    pub random: BTreeSet<HeadRef>,
}

pub const GROUP_NAMES: [&str; 6] = [
    "speech_prefix_top",
    "text_prefix_top",
    "speech_unique",
    "text_unique",
    "non_prefix_top",
    "random",
];

impl HeadGroups {
    /// Groups in [`GROUP_NAMES`] order.
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &BTreeSet<HeadRef>)> {
        GROUP_NAMES.into_iter().zip([
            &self.speech_prefix_top,
            &self.text_prefix_top,
            &self.speech_unique,
            &self.text_unique,
            &self.non_prefix_top,
            &self.random,
        ])
    }

    pub fn get(&self, name: &str) -> Option<&BTreeSet<HeadRef>> {
        self.iter().find(|(n, _)| *n == name).map(|(_, g)| g)
    }
}

/// Default group size: about 5% of all heads, at least 2.
pub fn default_k(total_heads: usize) -> usize {
    ((0.05 * total_heads as f64).round() as usize).max(2)
}

/// The `k` best heads by `score`, highest first, ties broken by (layer, head).
fn top_k(heads: &[HeadRef], k: usize, score: impl Fn(HeadRef) -> f64) -> BTreeSet<HeadRef> {
    let mut v: Vec<(f64, HeadRef)> = heads.iter().map(|&h| (score(h), h)).collect();
    v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    v.into_iter().take(k).map(|(_, h)| h).collect()
}

pub fn select_head_groups(table: &HeadScoreTable, k: usize, seed: u64) -> Result<HeadGroups> {
    let heads = table.heads();
    if k == 0 || k > heads.len() {
        return Err(Error::KTooLarge { k, available: heads.len() });
    }
    let score = |m: Modality, nonprefix: bool| {
        move |h: HeadRef| {
            let v = if nonprefix { table.nonprefix(m, h) } else { table.prefix(m, h) };
            v.unwrap_or(0.0)
        }
    };
    let speech_prefix_top = top_k(&heads, k, score(Modality::Speech, false));
    let text_prefix_top = top_k(&heads, k, score(Modality::Text, false));
    let non_prefix_top = top_k(&heads, k, |h| {
        score(Modality::Speech, true)(h) + score(Modality::Text, true)(h)
    });
    let reserved: BTreeSet<HeadRef> = speech_prefix_top
        .iter()
        .chain(&text_prefix_top)
        .chain(&non_prefix_top)
        .copied()
        .collect();
    let remaining: Vec<HeadRef> = heads.iter().filter(|h| !reserved.contains(h)).copied().collect();
    if remaining.len() < k {
        return Err(Error::KTooLarge {
            k,
            available: remaining.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = remaining.into_iter().choose_multiple(&mut rng, k).into_iter().collect();
    Ok(HeadGroups {
        k,
        seed,
        speech_unique: speech_prefix_top.difference(&text_prefix_top).copied().collect(),
        text_unique: text_prefix_top.difference(&speech_prefix_top).copied().collect(),
        speech_prefix_top,
        text_prefix_top,
        non_prefix_top,
        random,
    })
}

/// Group-summed attention for one condition and modality, averaged over prompts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupAttentionRow {
    pub group: String,
    pub condition: String,
    pub modality: Modality,
    pub prefix_sum: f64,
    pub nonprefix_sum: f64,
    pub prompts: usize,
}

/// Pre-normalization attention per (group, condition, modality): each
/// prompt's sums over qualifying tokens and over the group's heads, averaged
/// over that condition's prompts.
pub fn group_attention_report(
    n_heads: usize,
    by_condition: &[(String, Vec<PromptSums>)],
    groups: &[(String, BTreeSet<HeadRef>)],
) -> Result<Vec<GroupAttentionRow>> {
    let mut rows = Vec::new();
    for (gname, heads) in groups {
        if heads.is_empty() {
            return Err(Error::EmptyGroup(gname.clone()));
        }
        for (cond, prompts) in by_condition {
            for m in [Modality::Speech, Modality::Text] {
                let (mut p, mut np) = (0.0, 0.0);
                for s in prompts {
                    let b = s.bucket(m).expect("speech or text");
                    for h in heads {
                        let i = h.layer * n_heads + h.head;
                        p += b.prefix[i];
                        np += b.nonprefix[i];
                    }
                }
                let n = prompts.len().max(1) as f64;
                rows.push(GroupAttentionRow {
                    group: gname.clone(),
                    condition: cond.clone(),
                    modality: m,
                    prefix_sum: p / n,
                    nonprefix_sum: np / n,
                    prompts: prompts.len(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_group_report_csv(path: &Path, rows: &[GroupAttentionRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "group,condition,modality,prefix_sum,nonprefix_sum,prompts")?;
    for r in rows {
        let m = if r.modality == Modality::Speech { "speech" } else { "text" };
        writeln!(w, "{},{},{m},{:.9},{:.9},{}", r.group, r.condition, r.prefix_sum, r.nonprefix_sum, r.prompts)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_recent_occurrence_is_used() {
        let toks = [5, 6, 5, 7, 5];
        let m = [Modality::Text; 5];
        let q = qualifying_positions(&toks, &m);
        assert_eq!(q.len(), 2);
        assert_eq!((q[0].query, q[0].earlier), (2, 0));
        assert_eq!((q[1].query, q[1].earlier), (4, 2));
    }

    #[test]
    fn structural_queries_are_skipped() {
        let toks = [0, 9, 0, 9];
        let m = [Modality::Structural, Modality::Speech, Modality::Structural, Modality::Speech];
        let q = qualifying_positions(&toks, &m);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].query, 3);
    }

    #[test]
    fn default_k_scales() {
        assert_eq!(default_k(8), 2);
        assert_eq!(default_k(1024), 51);
    }

    #[test]
    fn frequency_filter_drops_both_tails() {
        let ids: Vec<TokenId> = (0..50).collect();
        let freq: Vec<u64> = (0..50).map(|i| 100 - i).collect();
        let kept = frequency_filtered(&ids, &freq, 0.04);
        assert_eq!(kept.len(), 46);
        assert!(!kept.contains(&0) && !kept.contains(&49));
    }
}
