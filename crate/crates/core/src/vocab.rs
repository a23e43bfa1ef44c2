//! Unified token space: three structural markers, then text words, then
//! speech units for each voice.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenId;

pub const TEXT_MARK: TokenId = 0;
pub const SPEECH_MARK: TokenId = 1;
/// The written `stop` closing every text block.
pub const TEXT_STOP: TokenId = 2;
const N_MARKERS: usize = 3;

/// Canonical units reserved for the spoken "stop"; word renderings never use them.
pub const STOP_UNITS: [u16; 2] = [0, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Speech,
    Structural,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, TokenId>,
    n_voices: usize,
    units_per_voice: usize,
}

impl Vocabulary {
    pub fn new(words: Vec<String>, n_voices: usize, units_per_voice: usize) -> Result<Self> {
        if n_voices == 0 || units_per_voice <= STOP_UNITS.len() {
            return Err(Error::Lexicon("vocabulary needs at least one voice and non-stop units".into()));
        }
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), (N_MARKERS + i) as TokenId).is_some() {
                return Err(Error::Lexicon(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self {
            words,
            index,
            n_voices,
            units_per_voice,
        })
    }

    pub fn size(&self) -> usize {
        N_MARKERS + self.words.len() + self.n_voices * self.units_per_voice
    }

    pub fn n_voices(&self) -> usize {
        self.n_voices
    }

    pub fn units_per_voice(&self) -> usize {
        self.units_per_voice
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn text_range(&self) -> Range<TokenId> {
        N_MARKERS as TokenId..(N_MARKERS + self.words.len()) as TokenId
    }

    pub fn speech_range(&self) -> Range<TokenId> {
        let start = (N_MARKERS + self.words.len()) as TokenId;
        start..self.size() as TokenId
    }

    pub fn word_token(&self, word: &str) -> Result<TokenId> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn word_of(&self, token: TokenId) -> Option<&str> {
        let r = self.text_range();
        r.contains(&token)
            .then(|| self.words[(token - r.start) as usize].as_str())
    }

    pub fn speech_token(&self, voice: usize, unit: u16) -> TokenId {
        debug_assert!(voice < self.n_voices && (unit as usize) < self.units_per_voice);
        self.speech_range().start + (voice * self.units_per_voice + unit as usize) as TokenId
    }

    /// `(voice, canonical unit)` of a speech token.
    pub fn unit_of(&self, token: TokenId) -> Option<(usize, u16)> {
        let r = self.speech_range();
        r.contains(&token).then(|| {
            let k = (token - r.start) as usize;
            (k / self.units_per_voice, (k % self.units_per_voice) as u16)
        })
    }

    pub fn modality(&self, token: TokenId) -> Modality {
        if self.text_range().contains(&token) {
            Modality::Text
        } else if self.speech_range().contains(&token) {
            Modality::Speech
        } else {
            Modality::Structural
        }
    }

    pub fn stop_sequence(&self, voice: usize) -> Vec<TokenId> {
        STOP_UNITS.iter().map(|&u| self.speech_token(voice, u)).collect()
    }

    /// Human-readable token name used in prompt dumps.
    pub fn describe(&self, token: TokenId) -> String {
        match token {
            TEXT_MARK => "[TEXT]".into(),
            SPEECH_MARK => "[SPEECH]".into(),
            TEXT_STOP => "'stop'".into(),
            t => match (self.word_of(t), self.unit_of(t)) {
                (Some(w), _) => w.to_string(),
                (None, Some((v, u))) => format!("v{v}u{u}"),
                _ => format!("<{t}>"),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_partition_the_id_space() {
        let v = Vocabulary::new(vec!["the".into(), "boy".into()], 2, 8).unwrap();
        assert_eq!(v.size(), 3 + 2 + 16);
        for t in 0..v.size() as TokenId {
            let m = v.modality(t);
            let hits = [v.text_range().contains(&t), v.speech_range().contains(&t), t < 3];
            assert_eq!(hits.iter().filter(|&&h| h).count(), 1);
            assert_eq!(m == Modality::Text, hits[0]);
        }
        let tok = v.speech_token(1, 5);
        assert_eq!(v.unit_of(tok), Some((1, 5)));
        assert_eq!(v.word_of(v.word_token("boy").unwrap()), Some("boy"));
    }

    #[test]
    fn duplicate_words_rejected() {
        assert!(Vocabulary::new(vec!["a".into(), "a".into()], 1, 8).is_err());
    }
}
