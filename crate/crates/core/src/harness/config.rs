//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 0
//!
//! [corpus]
//! eval_targets = 25
//! max_len = 512
//!
//! [model]
//! n_layers = 2
//!
//! [train]
//! steps = 4000
//! ```
//!
//! Every key is optional; missing keys take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, CorpusSpec, LexiconSizes, MAX_DEMOS};
use crate::error::{Error, Result};
use crate::induction::ModalityMix;
use crate::model::{AdamConfig, ModelConfig, TrainHyperparams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Omit wall-clock timestamps from the manifest.
    pub deterministic: bool,
    pub corpus: CorpusSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub scoring: ScoringSection,
    pub ablation: AblationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: false,
            corpus: CorpusSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            scoring: ScoringSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub nouns: usize,
    pub verbs: usize,
    pub voices: usize,
    pub eval_targets: usize,
    pub demo_sets: usize,
    pub max_demos: usize,
    pub conditions: Vec<Condition>,
    pub train_sequences: usize,
    pub train_max_demos: usize,
    pub icl_fraction: f64,
    pub speech_fraction: f64,
    pub max_len: usize,
    pub nonce_fraction: f64,
    pub repeat_fraction: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let s = CorpusSpec::default();
        let l = LexiconSizes::default();
        Self {
            nouns: l.nouns,
            verbs: l.verbs,
            voices: l.voices,
            eval_targets: s.eval_targets,
            demo_sets: s.demo_sets,
            max_demos: s.max_demos,
            conditions: s.conditions,
            train_sequences: s.train_sequences,
            train_max_demos: s.train_max_demos,
            icl_fraction: s.icl_fraction,
            speech_fraction: s.speech_fraction,
            max_len: s.max_len,
            nonce_fraction: s.nonce_fraction,
            repeat_fraction: s.repeat_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: u64,
    /// Cosine decay horizon; 0 decays over all `steps`.
    pub decay_steps: u64,
    pub min_lr_fraction: f64,
    pub clip_norm: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 8,
            lr: 3e-4,
            warmup_steps: 100,
            decay_steps: 0,
            min_lr_fraction: 0.1,
            clip_norm: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Conditions to sweep; empty means every condition in the corpus.
    pub conditions: Vec<Condition>,
    pub min_demos: usize,
    pub max_demos: usize,
    /// Generation budget per target; 0 picks one from the longest target.
    pub max_new_tokens: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            conditions: Vec::new(),
            min_demos: 0,
            max_demos: MAX_DEMOS,
            max_new_tokens: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    /// ICL prompts per rate condition (core, fast, slow).
    pub prompts_per_condition: usize,
    pub n_demos: usize,
    pub random_mix: ModalityMix,
    pub random_length: usize,
    pub random_repeats: usize,
    pub random_sequences: usize,
    pub freq_exclusion: f64,
    /// Head group size; 0 uses about 5% of all heads.
    pub k: usize,
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self {
            prompts_per_condition: 40,
            n_demos: 2,
            random_mix: ModalityMix::SpeechOnly,
            random_length: 50,
            random_repeats: 4,
            random_sequences: 25,
            freq_exclusion: 0.04,
            k: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub conditions: Vec<Condition>,
    pub n_demos: Vec<usize>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            conditions: vec![Condition::Core],
            n_demos: vec![1, 2],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if c.conditions.is_empty() {
            return Err(Error::Config("corpus.conditions is empty".into()));
        }
        if self.eval.min_demos > self.eval.max_demos {
            return Err(Error::Config("eval.min_demos exceeds eval.max_demos".into()));
        }
        if !(0.0..=1.0).contains(&(c.icl_fraction + c.speech_fraction)) || c.icl_fraction < 0.0 || c.speech_fraction < 0.0 {
            return Err(Error::Config("corpus fractions must be non-negative and sum to at most 1".into()));
        }
        if self.train.batch_size == 0 || self.train.lr <= 0.0 {
            return Err(Error::Config("train.batch_size and train.lr must be positive".into()));
        }
        self.model_config(1).validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn lexicon_sizes(&self) -> LexiconSizes {
        LexiconSizes {
            nouns: self.corpus.nouns,
            verbs: self.corpus.verbs,
            voices: self.corpus.voices,
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        let c = &self.corpus;
        CorpusSpec {
            seed: self.seed,
            eval_targets: c.eval_targets,
            demo_sets: c.demo_sets,
            max_demos: c.max_demos,
            conditions: c.conditions.clone(),
            train_sequences: c.train_sequences,
            train_max_demos: c.train_max_demos,
            icl_fraction: c.icl_fraction,
            speech_fraction: c.speech_fraction,
            max_len: c.max_len,
            nonce_fraction: c.nonce_fraction,
            repeat_fraction: c.repeat_fraction,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_model: m.d_model,
            d_ff: m.d_ff,
            max_context: self.corpus.max_len,
            vocab_size,
            seed: self.seed,
        }
    }

    pub fn train_hyperparams(&self) -> TrainHyperparams {
        let t = &self.train;
        TrainHyperparams {
            steps: t.steps,
            batch_size: t.batch_size,
            adam: AdamConfig {
                lr: t.lr,
                clip_norm: t.clip_norm,
                ..AdamConfig::default()
            },
            warmup_steps: t.warmup_steps,
            decay_steps: if t.decay_steps == 0 { t.steps } else { t.decay_steps },
            min_lr_fraction: t.min_lr_fraction,
            seed: self.seed,
        }
    }

    /// Conditions swept by `eval`.
    pub fn eval_conditions(&self) -> Vec<Condition> {
        if self.eval.conditions.is_empty() {
            self.corpus.conditions.clone()
        } else {
            self.eval.conditions.clone()
        }
    }
}
