use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexicon::{Lexicon, AUX_PAST, AUX_PRESENT, BY, DEFINITE, INDEFINITE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Syntax {
    Active,
    Passive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tense {
    Present,
    Past,
}

impl Tense {
    pub fn other(self) -> Self {
        match self {
            Tense::Present => Tense::Past,
            Tense::Past => Tense::Present,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Determiner {
    Definite,
    Indefinite,
}

impl Determiner {
    pub fn word(self) -> &'static str {
        match self {
            Determiner::Definite => DEFINITE,
            Determiner::Indefinite => INDEFINITE,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Determiner::Definite => Determiner::Indefinite,
            Determiner::Indefinite => Determiner::Definite,
        }
    }
}

/// A transitive clause. `verb` holds the lemma; `words` is the realized surface.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub syntax: Syntax,
    pub tense: Tense,
    pub determiner: Determiner,
    pub agent: String,
    pub verb: String,
    pub patient: String,
    pub words: Vec<String>,
}

impl Sentence {
    pub fn new(
        lexicon: &Lexicon,
        syntax: Syntax,
        tense: Tense,
        determiner: Determiner,
        agent: &str,
        verb: &str,
        patient: &str,
    ) -> Result<Self> {
        for n in [agent, patient] {
            if !lexicon.is_noun(n) {
                return Err(Error::UnknownWord(n.to_string()));
            }
        }
        let v = lexicon.verb(verb)?;
        let det = determiner.word();
        let words: Vec<&str> = match syntax {
            Syntax::Active => {
                let form = match tense {
                    Tense::Present => &v.present,
                    Tense::Past => &v.past,
                };
                vec![det, agent, form, det, patient]
            }
            Syntax::Passive => {
                let aux = match tense {
                    Tense::Present => AUX_PRESENT,
                    Tense::Past => AUX_PAST,
                };
                vec![det, patient, aux, &v.participle, BY, det, agent]
            }
        };
        Ok(Self {
            syntax,
            tense,
            determiner,
            agent: agent.to_string(),
            verb: verb.to_string(),
            patient: patient.to_string(),
            words: words.into_iter().map(String::from).collect(),
        })
    }

    /// The same proposition in another syntax, tense and determiner.
    pub fn recast(&self, lexicon: &Lexicon, syntax: Syntax, tense: Tense, determiner: Determiner) -> Result<Self> {
        Self::new(lexicon, syntax, tense, determiner, &self.agent, &self.verb, &self.patient)
    }

    pub fn triple(&self) -> (&str, &str, &str) {
        (&self.agent, &self.verb, &self.patient)
    }

    /// Content lemmas in surface order.
    pub fn content_lemmas(&self, lexicon: &Lexicon) -> Vec<String> {
        self.words
            .iter()
            .filter_map(|w| lexicon.lemma(w).map(String::from))
            .collect()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.words.join(" "))
    }
}
