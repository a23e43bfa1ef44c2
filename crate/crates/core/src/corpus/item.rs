use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{Lexicon, BY};
use super::sentence::{Determiner, Sentence, Syntax, Tense};
use crate::error::{Error, Result};

pub const MAX_DEMOS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapDegree {
    NounsOnly,
    VerbOnly,
    FunctionOnly,
    AllWords,
}

impl OverlapDegree {
    pub const ALL: [OverlapDegree; 4] = [Self::NounsOnly, Self::VerbOnly, Self::FunctionOnly, Self::AllWords];

    fn name(self) -> &'static str {
        match self {
            Self::NounsOnly => "nouns_only",
            Self::VerbOnly => "verb_only",
            Self::FunctionOnly => "function_only",
            Self::AllWords => "all_words",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Condition {
    Core,
    LexicalOverlap(OverlapDegree),
    SemanticSimilarity(OverlapDegree),
    RateFast,
    RateSlow,
}

impl Condition {
    /// Every valid condition in a fixed order.
    pub fn all() -> Vec<Condition> {
        let mut out = vec![Condition::Core];
        out.extend(OverlapDegree::ALL.map(Condition::LexicalOverlap));
        out.push(Condition::SemanticSimilarity(OverlapDegree::NounsOnly));
        out.push(Condition::SemanticSimilarity(OverlapDegree::VerbOnly));
        out.push(Condition::RateFast);
        out.push(Condition::RateSlow);
        out
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Condition::SemanticSimilarity(OverlapDegree::FunctionOnly | OverlapDegree::AllWords) => Err(
                Error::InvalidItem(format!("{self} is not defined; semantic similarity covers nouns and verbs only")),
            ),
            _ => Ok(()),
        }
    }

    /// Speaking rate of the demonstrations (and of the expected output).
    pub fn rate(self) -> Rate {
        match self {
            Condition::RateFast => Rate::Fast,
            Condition::RateSlow => Rate::Slow,
            _ => Rate::Core,
        }
    }

    pub fn is_overlap(self) -> bool {
        matches!(self, Condition::LexicalOverlap(_) | Condition::SemanticSimilarity(_))
    }

    pub fn demo_range(self) -> std::ops::RangeInclusive<usize> {
        if self.is_overlap() {
            1..=1
        } else {
            0..=MAX_DEMOS
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Core => f.write_str("core"),
            Condition::LexicalOverlap(d) => write!(f, "lexical_overlap:{}", d.name()),
            Condition::SemanticSimilarity(d) => write!(f, "semantic_similarity:{}", d.name()),
            Condition::RateFast => f.write_str("rate_fast"),
            Condition::RateSlow => f.write_str("rate_slow"),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let degree = |d: &str| {
            OverlapDegree::ALL
                .into_iter()
                .find(|x| x.name() == d)
                .ok_or_else(|| Error::InvalidItem(format!("unknown overlap degree {d:?}")))
        };
        let c = match s.split_once(':') {
            None => match s {
                "core" => Condition::Core,
                "rate_fast" => Condition::RateFast,
                "rate_slow" => Condition::RateSlow,
                _ => return Err(Error::InvalidItem(format!("unknown condition {s:?}"))),
            },
            Some(("lexical_overlap", d)) => Condition::LexicalOverlap(degree(d)?),
            Some(("semantic_similarity", d)) => Condition::SemanticSimilarity(degree(d)?),
            _ => return Err(Error::InvalidItem(format!("unknown condition {s:?}"))),
        };
        c.validate()?;
        Ok(c)
    }
}

impl TryFrom<String> for Condition {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rate {
    Fast,
    Core,
    Slow,
}

impl Rate {
    pub const ALL: [Rate; 3] = [Rate::Fast, Rate::Core, Rate::Slow];

    /// Apply the rate rule to a core-rate unit sequence.
    pub fn apply(self, core: &[u16]) -> Vec<u16> {
        match self {
            Rate::Core => core.to_vec(),
            Rate::Fast => core.iter().step_by(2).copied().collect(),
            Rate::Slow => core.iter().flat_map(|&u| [u, u]).collect(),
        }
    }

    pub fn units_per_word(self, core_units: usize) -> usize {
        match self {
            Rate::Fast => core_units / 2,
            Rate::Core => core_units,
            Rate::Slow => core_units * 2,
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rate::Fast => "fast",
            Rate::Core => "core",
            Rate::Slow => "slow",
        })
    }
}

/// Target syntax crossed with whether demonstrations share it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntaxCombo {
    ActiveCongruent,
    ActiveIncongruent,
    PassiveCongruent,
    PassiveIncongruent,
}

impl SyntaxCombo {
    pub const ALL: [SyntaxCombo; 4] = [
        Self::ActiveCongruent,
        Self::ActiveIncongruent,
        Self::PassiveCongruent,
        Self::PassiveIncongruent,
    ];

    pub fn target(self) -> Syntax {
        match self {
            Self::ActiveCongruent | Self::ActiveIncongruent => Syntax::Active,
            _ => Syntax::Passive,
        }
    }

    pub fn demonstration(self) -> Syntax {
        match self {
            Self::ActiveCongruent | Self::PassiveIncongruent => Syntax::Active,
            _ => Syntax::Passive,
        }
    }
}

impl fmt::Display for SyntaxCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ActiveCongruent => "active_congruent",
            Self::ActiveIncongruent => "active_incongruent",
            Self::PassiveCongruent => "passive_congruent",
            Self::PassiveIncongruent => "passive_incongruent",
        })
    }
}

/// Content of a prompt before serialization: demonstrations and a target
/// whose speech the model must produce in `voice`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclItem {
    pub condition: Condition,
    pub combo: SyntaxCombo,
    pub target: Sentence,
    pub demonstrations: Vec<Sentence>,
    pub demo_rates: Vec<Rate>,
    pub voice: usize,
    pub seed: u64,
}

impl IclItem {
    pub fn n_demos(&self) -> usize {
        self.demonstrations.len()
    }

    /// Speech rate the output is expected to follow.
    pub fn rate(&self) -> Rate {
        self.condition.rate()
    }

    /// The same item with only its first `n` demonstrations.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.demonstrations.truncate(n);
        out.demo_rates.truncate(n);
        out
    }

    /// Check every structural invariant against the lexicon.
    pub fn validate(&self, lexicon: &Lexicon) -> Result<()> {
        self.condition.validate()?;
        let bad = |m: String| Err(Error::InvalidItem(m));
        if self.voice >= lexicon.n_voices {
            return bad(format!("voice {} out of range", self.voice));
        }
        if self.demonstrations.len() != self.demo_rates.len() {
            return bad("one rate per demonstration required".into());
        }
        if self.condition.is_overlap() && self.n_demos() != 1 {
            return bad(format!("{} items take exactly one demonstration", self.condition));
        }
        if self.n_demos() > MAX_DEMOS {
            return bad(format!("at most {MAX_DEMOS} demonstrations"));
        }
        let realized = |s: &Sentence| s.recast(lexicon, s.syntax, s.tense, s.determiner);
        if realized(&self.target)?.words != self.target.words || self.target.syntax != self.combo.target() {
            return bad("target does not match its slots".into());
        }
        for d in &self.demonstrations {
            if realized(d)?.words != d.words || d.syntax != self.combo.demonstration() {
                return bad("demonstration does not match its slots".into());
            }
            check_relation(lexicon, self.condition, d, &self.target)?;
        }
        if self.demo_rates.iter().any(|&r| r != self.condition.rate()) {
            return bad("demonstration rate differs from condition".into());
        }
        Ok(())
    }
}

/// Determiner plus content lemmas; the word classes overlap degrees are defined over.
fn overlap_keys(lexicon: &Lexicon, s: &Sentence) -> BTreeSet<String> {
    let mut k: BTreeSet<String> = s.content_lemmas(lexicon).into_iter().collect();
    k.insert(s.determiner.word().to_string());
    k
}

fn nouns_related(lexicon: &Lexicon, a: &str, b: &str) -> bool {
    a == b || lexicon.noun_synonym(a) == Some(b)
}

fn verbs_related(lexicon: &Lexicon, a: &str, b: &str) -> bool {
    a == b || lexicon.verb_synonym(a) == Some(b)
}

/// Whether `demo` has exactly the relation to `target` that `condition` declares.
fn check_relation(lexicon: &Lexicon, condition: Condition, demo: &Sentence, target: &Sentence) -> Result<()> {
    let fail = |m: &str| Err(Error::InvalidItem(format!("{condition}: {m} ({demo} / {target})")));
    let demo_nouns = [demo.agent.as_str(), demo.patient.as_str()];
    let target_nouns = [target.agent.as_str(), target.patient.as_str()];
    let any_noun_related = demo_nouns
        .iter()
        .any(|d| target_nouns.iter().any(|t| nouns_related(lexicon, d, t)));
    let verb_related = verbs_related(lexicon, &demo.verb, &target.verb);
    let shared: BTreeSet<String> = overlap_keys(lexicon, demo)
        .intersection(&overlap_keys(lexicon, target))
        .cloned()
        .collect();
    let same_tense = demo.tense == target.tense;
    match condition {
        Condition::Core | Condition::RateFast | Condition::RateSlow => {
            let t: BTreeSet<&String> = target.words.iter().collect();
            if demo.words.iter().any(|w| w != BY && t.contains(w)) {
                return fail("shares a surface word");
            }
            if same_tense || any_noun_related || verb_related {
                return fail("tense or meaning overlaps");
            }
        }
        Condition::LexicalOverlap(degree) => {
            let expected: BTreeSet<String> = match degree {
                OverlapDegree::NounsOnly => target_nouns.iter().map(|s| s.to_string()).collect(),
                OverlapDegree::VerbOnly => [target.verb.clone()].into(),
                OverlapDegree::FunctionOnly => [target.determiner.word().to_string()].into(),
                OverlapDegree::AllWords => overlap_keys(lexicon, target),
            };
            if shared != expected {
                return fail("shared words differ from the declared degree");
            }
            let agrees = matches!(degree, OverlapDegree::FunctionOnly | OverlapDegree::AllWords);
            if same_tense != agrees {
                return fail("tense agreement does not follow the degree");
            }
            let synonym_leak = match degree {
                OverlapDegree::NounsOnly => verb_related,
                OverlapDegree::VerbOnly => any_noun_related,
                OverlapDegree::FunctionOnly => any_noun_related || verb_related,
                OverlapDegree::AllWords => false,
            };
            if synonym_leak {
                return fail("unexpected semantic relation");
            }
        }
        Condition::SemanticSimilarity(degree) => {
            if !shared.is_empty() || same_tense {
                return fail("shares words or tense");
            }
            let ok = match degree {
                OverlapDegree::NounsOnly => {
                    lexicon.noun_synonym(&target.agent) == Some(&demo.agent)
                        && lexicon.noun_synonym(&target.patient) == Some(&demo.patient)
                        && !verb_related
                }
                OverlapDegree::VerbOnly => lexicon.verb_synonym(&target.verb) == Some(&demo.verb) && !any_noun_related,
                _ => false,
            };
            if !ok {
                return fail("synonym relation differs from the declared degree");
            }
        }
    }
    Ok(())
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [&'a str], what: &str) -> Result<&'a str> {
    pool.choose(rng)
        .copied()
        .ok_or_else(|| Error::InvalidItem(format!("lexicon too small: no {what} left")))
}

/// Two distinct nouns from `pool`.
fn pick_two<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> Result<(&'a str, &'a str)> {
    if pool.len() < 2 {
        return Err(Error::InvalidItem("lexicon too small: fewer than two unrelated nouns".into()));
    }
    let v: Vec<&&str> = pool.choose_multiple(rng, 2).collect();
    Ok((v[0], v[1]))
}

fn pick_sentence_parts(rng: &mut ChaCha8Rng) -> (Tense, Determiner) {
    let tense = if rng.gen_bool(0.5) { Tense::Present } else { Tense::Past };
    let det = if rng.gen_bool(0.5) { Determiner::Definite } else { Determiner::Indefinite };
    (tense, det)
}

/// A random target sentence; nouns and verb have synonyms when `needs_synonyms`.
pub fn random_sentence(lexicon: &Lexicon, syntax: Syntax, needs_synonyms: bool, rng: &mut ChaCha8Rng) -> Result<Sentence> {
    let nouns: Vec<&str> = lexicon
        .nouns
        .iter()
        .map(|s| s.as_str())
        .filter(|n| !needs_synonyms || lexicon.noun_synonym(n).is_some())
        .collect();
    let verbs: Vec<&str> = lexicon
        .verbs
        .iter()
        .map(|v| v.lemma.as_str())
        .filter(|v| !needs_synonyms || lexicon.verb_synonym(v).is_some())
        .collect();
    let (agent, patient) = loop {
        let (a, p) = pick_two(rng, &nouns)?;
        // synonymous participants would leave no room for semantic contrasts
        if !nouns_related(lexicon, a, p) || nouns.len() == 2 {
            break (a, p);
        }
    };
    let verb = pick(rng, &verbs, "verbs")?;
    let (tense, det) = pick_sentence_parts(rng);
    Sentence::new(lexicon, syntax, tense, det, agent, verb, patient)
}

/// One demonstration standing in `condition`'s relation to `target`.
fn make_demo(
    lexicon: &Lexicon,
    condition: Condition,
    syntax: Syntax,
    target: &Sentence,
    rng: &mut ChaCha8Rng,
) -> Result<Sentence> {
    let unrelated_nouns: Vec<&str> = lexicon
        .nouns
        .iter()
        .map(|s| s.as_str())
        .filter(|n| !nouns_related(lexicon, n, &target.agent) && !nouns_related(lexicon, n, &target.patient))
        .collect();
    let unrelated_verbs: Vec<&str> = lexicon
        .verbs
        .iter()
        .map(|v| v.lemma.as_str())
        .filter(|v| !verbs_related(lexicon, v, &target.verb))
        .collect();
    let synonym = |s: Option<&str>, w: &str| -> Result<String> {
        s.map(String::from)
            .ok_or_else(|| Error::InvalidItem(format!("{w:?} has no synonym in the lexicon")))
    };
    let contrast = (target.tense.other(), target.determiner.other());
    let (agent, verb, patient, (tense, det)) = match condition {
        Condition::Core | Condition::RateFast | Condition::RateSlow => {
            let (a, p) = pick_two(rng, &unrelated_nouns)?;
            let v = pick(rng, &unrelated_verbs, "unrelated verbs")?;
            (a.to_string(), v.to_string(), p.to_string(), contrast)
        }
        Condition::LexicalOverlap(degree) => match degree {
            OverlapDegree::NounsOnly => {
                let v = pick(rng, &unrelated_verbs, "unrelated verbs")?;
                (target.agent.clone(), v.to_string(), target.patient.clone(), contrast)
            }
            OverlapDegree::VerbOnly => {
                let (a, p) = pick_two(rng, &unrelated_nouns)?;
                (a.to_string(), target.verb.clone(), p.to_string(), contrast)
            }
            OverlapDegree::FunctionOnly => {
                let (a, p) = pick_two(rng, &unrelated_nouns)?;
                let v = pick(rng, &unrelated_verbs, "unrelated verbs")?;
                (a.to_string(), v.to_string(), p.to_string(), (target.tense, target.determiner))
            }
            OverlapDegree::AllWords => (
                target.agent.clone(),
                target.verb.clone(),
                target.patient.clone(),
                (target.tense, target.determiner),
            ),
        },
        Condition::SemanticSimilarity(degree) => match degree {
            OverlapDegree::NounsOnly => {
                let v = pick(rng, &unrelated_verbs, "unrelated verbs")?;
                (
                    synonym(lexicon.noun_synonym(&target.agent), &target.agent)?,
                    v.to_string(),
                    synonym(lexicon.noun_synonym(&target.patient), &target.patient)?,
                    contrast,
                )
            }
            OverlapDegree::VerbOnly => {
                let (a, p) = pick_two(rng, &unrelated_nouns)?;
                (
                    a.to_string(),
                    synonym(lexicon.verb_synonym(&target.verb), &target.verb)?,
                    p.to_string(),
                    contrast,
                )
            }
            _ => return Err(Error::InvalidItem(format!("{condition} is not defined"))),
        },
    };
    Sentence::new(lexicon, syntax, tense, det, &agent, &verb, &patient)
}

/// Build an item around a fixed target proposition. Demonstrations are drawn
/// sequentially, so the first `n` demonstrations do not depend on `n_demos`.
pub fn make_item_for_target(
    lexicon: &Lexicon,
    condition: Condition,
    combo: SyntaxCombo,
    target: &Sentence,
    n_demos: usize,
    seed: u64,
) -> Result<IclItem> {
    condition.validate()?;
    if n_demos > MAX_DEMOS {
        return Err(Error::InvalidItem(format!("n_demos {n_demos} exceeds {MAX_DEMOS}")));
    }
    if condition.is_overlap() && n_demos != 1 {
        return Err(Error::InvalidItem(format!("{condition} items take exactly one demonstration")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let voice = rng.gen_range(0..lexicon.n_voices);
    let target = target.recast(lexicon, combo.target(), target.tense, target.determiner)?;
    let mut demonstrations = Vec::with_capacity(n_demos);
    for _ in 0..n_demos {
        demonstrations.push(make_demo(lexicon, condition, combo.demonstration(), &target, &mut rng)?);
    }
    let item = IclItem {
        condition,
        combo,
        target,
        demo_rates: vec![condition.rate(); n_demos],
        demonstrations,
        voice,
        seed,
    };
    item.validate(lexicon)?;
    Ok(item)
}

pub fn make_item(lexicon: &Lexicon, condition: Condition, combo: SyntaxCombo, n_demos: usize, seed: u64) -> Result<IclItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let needs_synonyms = matches!(condition, Condition::SemanticSimilarity(_));
    let target = random_sentence(lexicon, combo.target(), needs_synonyms, &mut rng)?;
    make_item_for_target(lexicon, condition, combo, &target, n_demos, rng.gen())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::lexicon::{generate_lexicon, LexiconSizes};

    fn lex() -> Lexicon {
        generate_lexicon(11, LexiconSizes::default()).unwrap()
    }

    #[test]
    fn condition_names_round_trip() {
        for c in Condition::all() {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<Condition>(&json).unwrap(), c);
        }
        assert!("semantic_similarity:all_words".parse::<Condition>().is_err());
        assert!("nonsense".parse::<Condition>().is_err());
    }

    #[test]
    fn rate_rule_lengths() {
        let core = [5, 6, 7, 8, 9, 10, 11, 12];
        assert_eq!(Rate::Fast.apply(&core), vec![5, 7, 9, 11]);
        assert_eq!(Rate::Slow.apply(&core).len(), 16);
    }

    #[test]
    fn core_active_pair_is_disjoint_with_different_tense() {
        let lex = lex();
        for seed in 0..50 {
            let item = make_item(&lex, Condition::Core, SyntaxCombo::ActiveCongruent, 1, seed).unwrap();
            let d = &item.demonstrations[0];
            assert!(d.words.iter().all(|w| !item.target.words.contains(w)));
            assert_ne!(d.tense, item.target.tense);
        }
    }

    #[test]
    fn overlap_items_need_one_demo() {
        let lex = lex();
        let c = Condition::LexicalOverlap(OverlapDegree::NounsOnly);
        assert!(make_item(&lex, c, SyntaxCombo::ActiveCongruent, 2, 0).is_err());
        assert!(make_item(&lex, c, SyntaxCombo::ActiveCongruent, 1, 0).is_ok());
    }

    #[test]
    fn all_words_active_congruent_repeats_the_target() {
        let lex = lex();
        let c = Condition::LexicalOverlap(OverlapDegree::AllWords);
        let item = make_item(&lex, c, SyntaxCombo::ActiveCongruent, 1, 3).unwrap();
        assert_eq!(item.demonstrations[0].words, item.target.words);
    }

    #[test]
    fn demos_are_prefix_stable() {
        let lex = lex();
        let five = make_item(&lex, Condition::Core, SyntaxCombo::PassiveIncongruent, 5, 9).unwrap();
        for n in 0..5 {
            let item = make_item(&lex, Condition::Core, SyntaxCombo::PassiveIncongruent, n, 9).unwrap();
            assert_eq!(item, five.truncated(n));
        }
    }

    #[test]
    fn semantic_without_synonyms_is_unsatisfiable() {
        let lex = generate_lexicon(
            0,
            LexiconSizes {
                nouns: 5,
                verbs: 3,
                voices: 1,
            },
        )
        .unwrap();
        let lonely = lex.nouns.iter().find(|n| lex.noun_synonym(n).is_none()).unwrap();
        let other = lex.nouns.iter().find(|n| *n != lonely).unwrap();
        let target = Sentence::new(&lex, Syntax::Active, Tense::Past, Determiner::Definite, lonely, &lex.verbs[0].lemma, other).unwrap();
        let c = Condition::SemanticSimilarity(OverlapDegree::NounsOnly);
        assert!(make_item_for_target(&lex, c, SyntaxCombo::ActiveCongruent, &target, 1, 0).is_err());
    }
}
