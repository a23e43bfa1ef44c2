use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::vocab::{Vocabulary, STOP_UNITS};

/// Speech units per word at core rate.
pub const UNITS_PER_WORD: usize = 4;
/// Canonical speech units per voice, including the two reserved stop units.
pub const UNITS_PER_VOICE: usize = 64;

pub const DEFINITE: &str = "the";
pub const INDEFINITE: &str = "a";
pub const AUX_PRESENT: &str = "is";
pub const AUX_PAST: &str = "was";
pub const BY: &str = "by";
pub const FUNCTION_WORDS: [&str; 5] = [DEFINITE, INDEFINITE, AUX_PRESENT, AUX_PAST, BY];

const NOUN_POOL: [(&str, &str); 12] = [
    ("secretary", "employee"),
    ("cousin", "uncle"),
    ("boy", "lad"),
    ("adult", "grownup"),
    ("doctor", "physician"),
    ("teacher", "tutor"),
    ("sailor", "seaman"),
    ("writer", "author"),
    ("lawyer", "attorney"),
    ("friend", "companion"),
    ("child", "kid"),
    ("painter", "artist"),
];

type Forms = (&'static str, &'static str, &'static str, &'static str);

const VERB_POOL: [(Forms, Forms); 8] = [
    (("judge", "judges", "judged", "judged"), ("assess", "assesses", "assessed", "assessed")),
    (("forget", "forgets", "forgot", "forgotten"), ("overlook", "overlooks", "overlooked", "overlooked")),
    (("help", "helps", "helped", "helped"), ("assist", "assists", "assisted", "assisted")),
    (("see", "sees", "saw", "seen"), ("notice", "notices", "noticed", "noticed")),
    (("call", "calls", "called", "called"), ("phone", "phones", "phoned", "phoned")),
    (("follow", "follows", "followed", "followed"), ("chase", "chases", "chased", "chased")),
    (("praise", "praises", "praised", "praised"), ("applaud", "applauds", "applauded", "applauded")),
    (("teach", "teaches", "taught", "taught"), ("train", "trains", "trained", "trained")),
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verb {
    pub lemma: String,
    pub present: String,
    pub past: String,
    pub participle: String,
}

impl Verb {
    fn from_forms(f: Forms) -> Self {
        Self {
            lemma: f.0.into(),
            present: f.1.into(),
            past: f.2.into(),
            participle: f.3.into(),
        }
    }

    pub fn forms(&self) -> [&str; 3] {
        [&self.present, &self.past, &self.participle]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconSizes {
    pub nouns: usize,
    pub verbs: usize,
    pub voices: usize,
}

impl Default for LexiconSizes {
    fn default() -> Self {
        Self {
            nouns: 16,
            verbs: 8,
            voices: 2,
        }
    }
}

/// Word material plus the per-word canonical speech renderings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub seed: u64,
    pub n_voices: usize,
    pub nouns: Vec<String>,
    pub verbs: Vec<Verb>,
    pub noun_synonyms: BTreeMap<String, String>,
    pub verb_synonyms: BTreeMap<String, String>,
    /// Canonical units (within one voice) for every surface form.
    pub renderings: BTreeMap<String, Vec<u16>>,
}

/// Pick `n` items from pooled synonym pairs, keeping pairs together where possible.
fn pick_pairs<T: Clone>(pool: &[(T, T)], n: usize, rng: &mut ChaCha8Rng) -> Vec<(T, Option<T>)> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::new();
    let mut left = n;
    for i in order {
        if left == 0 {
            break;
        }
        let (a, b) = pool[i].clone();
        if left >= 2 {
            out.push((a.clone(), Some(b.clone())));
            out.push((b, Some(a)));
            left -= 2;
        } else {
            out.push((a, None));
            left -= 1;
        }
    }
    out
}

fn fast_of(core: &[u16]) -> Vec<u16> {
    core.iter().step_by(2).copied().collect()
}

pub fn generate_lexicon(seed: u64, sizes: LexiconSizes) -> Result<Lexicon> {
    if sizes.nouns < 2 || sizes.verbs < 2 {
        return Err(Error::Lexicon(format!(
            "need at least 2 nouns and 2 verbs, got {} and {}",
            sizes.nouns, sizes.verbs
        )));
    }
    if sizes.nouns > 2 * NOUN_POOL.len() || sizes.verbs > 2 * VERB_POOL.len() {
        return Err(Error::Lexicon(format!(
            "at most {} nouns and {} verbs available",
            2 * NOUN_POOL.len(),
            2 * VERB_POOL.len()
        )));
    }
    if sizes.voices == 0 {
        return Err(Error::Lexicon("need at least one voice".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "lexicon"));
    let mut nouns = Vec::new();
    let mut noun_synonyms = BTreeMap::new();
    for (n, syn) in pick_pairs(&NOUN_POOL, sizes.nouns, &mut rng) {
        if let Some(s) = syn {
            noun_synonyms.insert(n.to_string(), s.to_string());
        }
        nouns.push(n.to_string());
    }
    let mut verbs = Vec::new();
    let mut verb_synonyms = BTreeMap::new();
    for (v, syn) in pick_pairs(&VERB_POOL, sizes.verbs, &mut rng) {
        if let Some(s) = syn {
            verb_synonyms.insert(v.0.to_string(), s.0.to_string());
        }
        verbs.push(Verb::from_forms(v));
    }
    nouns.sort();
    verbs.sort_by(|a, b| a.lemma.cmp(&b.lemma));

    let mut lex = Lexicon {
        seed,
        n_voices: sizes.voices,
        nouns,
        verbs,
        noun_synonyms,
        verb_synonyms,
        renderings: BTreeMap::new(),
    };
    lex.renderings = assign_renderings(seed, &lex.surface_forms())?;
    lex.validate()?;
    Ok(lex)
}

/// Draw one candidate rendering of `word`; `attempt` > 0 only after a collision.
fn candidate(seed: u64, word: &str, attempt: u32) -> Vec<u16> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("render/{word}/{attempt}")));
    let lo = STOP_UNITS.len() as u16;
    let mut units = Vec::with_capacity(UNITS_PER_WORD);
    while units.len() < UNITS_PER_WORD {
        let u = rng.gen_range(lo..UNITS_PER_VOICE as u16);
        if !units.contains(&u) {
            units.push(u);
        }
    }
    units
}

/// Renderings with distinct units, unique core and fast forms, and no core
/// form equal to two fast forms back to back (so rate hypotheses never
/// shadow each other in the decoder).
fn assign_renderings(seed: u64, words: &[String]) -> Result<BTreeMap<String, Vec<u16>>> {
    let mut out: BTreeMap<String, Vec<u16>> = BTreeMap::new();
    let mut cores: HashSet<Vec<u16>> = HashSet::new();
    let mut fasts: Vec<Vec<u16>> = Vec::new();
    for word in words {
        let mut accepted = None;
        for attempt in 0..1000 {
            let core = candidate(seed, word, attempt);
            let fast = fast_of(&core);
            if cores.contains(&core) || fasts.contains(&fast) {
                continue;
            }
            let mut all_fast = fasts.clone();
            all_fast.push(fast.clone());
            let shadows = all_fast.iter().any(|a| {
                all_fast.iter().any(|b| {
                    let pair: Vec<u16> = a.iter().chain(b).copied().collect();
                    pair == core || ((a == &fast || b == &fast) && cores.contains(&pair))
                })
            });
            if !shadows {
                accepted = Some((core, fast));
                break;
            }
        }
        let (core, fast) =
            accepted.ok_or_else(|| Error::Lexicon(format!("could not find a collision-free rendering for {word:?}")))?;
        cores.insert(core.clone());
        fasts.push(fast);
        out.insert(word.clone(), core);
    }
    Ok(out)
}

impl Lexicon {
    /// Every surface form in sorted order.
    pub fn surface_forms(&self) -> Vec<String> {
        let mut set: BTreeSet<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
        set.extend(self.nouns.iter().cloned());
        for v in &self.verbs {
            set.extend(v.forms().iter().map(|s| s.to_string()));
        }
        set.into_iter().collect()
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.surface_forms(), self.n_voices, UNITS_PER_VOICE).expect("surface forms are unique")
    }

    pub fn verb(&self, lemma: &str) -> Result<&Verb> {
        self.verbs
            .iter()
            .find(|v| v.lemma == lemma)
            .ok_or_else(|| Error::UnknownWord(lemma.to_string()))
    }

    pub fn is_noun(&self, word: &str) -> bool {
        self.nouns.iter().any(|n| n == word)
    }

    /// Lemma of a content word; `None` for function words and unknown words.
    pub fn lemma(&self, word: &str) -> Option<&str> {
        if let Some(n) = self.nouns.iter().find(|n| *n == word) {
            return Some(n);
        }
        self.verbs
            .iter()
            .find(|v| v.forms().contains(&word))
            .map(|v| v.lemma.as_str())
    }

    pub fn is_known(&self, word: &str) -> bool {
        self.renderings.contains_key(word)
    }

    pub fn rendering(&self, word: &str) -> Result<&[u16]> {
        self.renderings
            .get(word)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn noun_synonym(&self, noun: &str) -> Option<&str> {
        self.noun_synonyms.get(noun).map(|s| s.as_str())
    }

    pub fn verb_synonym(&self, lemma: &str) -> Option<&str> {
        self.verb_synonyms.get(lemma).map(|s| s.as_str())
    }

    /// Check structural invariants; used after generation and after loading from JSON.
    pub fn validate(&self) -> Result<()> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for f in FUNCTION_WORDS {
            owner.insert(f, f);
        }
        for n in &self.nouns {
            if owner.insert(n, n).is_some() {
                return Err(Error::Lexicon(format!("surface form {n:?} used twice")));
            }
        }
        for v in &self.verbs {
            if v.present == v.past {
                return Err(Error::Lexicon(format!("verb {:?} lacks distinct tense forms", v.lemma)));
            }
            for f in v.forms() {
                if let Some(prev) = owner.insert(f, &v.lemma) {
                    if prev != v.lemma {
                        return Err(Error::Lexicon(format!("surface form {f:?} used twice")));
                    }
                }
            }
        }
        for (a, b) in self.noun_synonyms.iter().chain(&self.verb_synonyms) {
            if a == b {
                return Err(Error::Lexicon(format!("{a:?} listed as its own synonym")));
            }
        }
        let mut seen = HashSet::new();
        for w in self.surface_forms() {
            let r = self.rendering(&w)?;
            if r.len() != UNITS_PER_WORD || r.iter().any(|&u| (u as usize) >= UNITS_PER_VOICE || STOP_UNITS.contains(&u)) {
                return Err(Error::Lexicon(format!("bad rendering for {w:?}")));
            }
            if !seen.insert(r.to_vec()) {
                return Err(Error::Lexicon(format!("rendering collision at {w:?}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_lexicon() {
        let a = generate_lexicon(5, LexiconSizes::default()).unwrap();
        let b = generate_lexicon(5, LexiconSizes::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_lexicon(6, LexiconSizes::default()).unwrap();
        assert_ne!(a.renderings, c.renderings);
    }

    #[test]
    fn too_few_nouns_is_error() {
        let sizes = LexiconSizes {
            nouns: 1,
            ..Default::default()
        };
        assert!(generate_lexicon(0, sizes).is_err());
    }

    #[test]
    fn every_verb_form_maps_to_its_lemma() {
        let lex = generate_lexicon(1, LexiconSizes::default()).unwrap();
        for v in &lex.verbs {
            for f in v.forms() {
                assert_eq!(lex.lemma(f), Some(v.lemma.as_str()));
            }
            assert_ne!(v.present, v.past);
        }
        for f in FUNCTION_WORDS {
            assert_eq!(lex.lemma(f), None);
        }
    }

    #[test]
    fn synonyms_are_symmetric_and_in_lexicon() {
        let lex = generate_lexicon(2, LexiconSizes::default()).unwrap();
        for (a, b) in &lex.noun_synonyms {
            assert!(lex.is_noun(b));
            assert_eq!(lex.noun_synonym(b), Some(a.as_str()));
        }
        for (a, b) in &lex.verb_synonyms {
            assert!(lex.verb(b).is_ok());
            assert_eq!(lex.verb_synonym(b), Some(a.as_str()));
        }
    }

    #[test]
    fn fast_forms_unique_and_never_concatenate_to_a_core_form() {
        let lex = generate_lexicon(3, LexiconSizes::default()).unwrap();
        let fasts: Vec<Vec<u16>> = lex.renderings.values().map(|r| fast_of(r)).collect();
        let unique: HashSet<_> = fasts.iter().collect();
        assert_eq!(unique.len(), fasts.len());
        let cores: HashSet<&Vec<u16>> = lex.renderings.values().collect();
        for a in &fasts {
            for b in &fasts {
                let pair: Vec<u16> = a.iter().chain(b).copied().collect();
                assert!(!cores.contains(&pair));
            }
        }
    }
}
