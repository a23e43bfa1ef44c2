//! Experiment orchestration over a run directory:
//!
//! ```text
//! <out>/config.toml      resolved configuration
//! <out>/corpus/          lexicon, corpus spec, train and eval JSONL
//! <out>/checkpoints/     model.ckpt, loss.csv
//! <out>/scores/          head score tables, head groups, group attention
//! <out>/eval/            per-item records and aggregates, ablation results
//! <out>/report/          one CSV per figure plus summary.json
//! <out>/manifest.json    per-stage status and file hashes
//! ```
//!
//! Each stage keeps its outputs in memory until it succeeds, then writes
//! them; a failing stage leaves earlier files alone and is marked failed in
//! the manifest.

mod config;
mod manifest;
mod report;
mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_corpus, generate_lexicon, read_corpus, write_corpus, Condition, Corpus};
use crate::error::{Error, Result};
use crate::induction::{
    default_k, group_attention_report, model_prompt_sums, score_random_sequences, select_head_groups,
    write_group_report_csv, HeadGroups, HeadScoreTable, PromptSums, RandomSequenceConfig,
};
use crate::model::{read_checkpoint, train, write_checkpoint, write_loss_csv, Checkpoint, TokenId, CHECKPOINT_VERSION};
use crate::prompt::{build_prompt, target_continuation};
use crate::seed::derive_seed;
use crate::vocab::Modality;

pub use config::{
    AblationSection, CorpusSection, EvalSection, ExperimentConfig, ModelSection, ScoringSection, TrainSection,
};
pub use manifest::{sha256_hex, write_if_changed, RunManifest, StageOutput, StageRecord, StageStatus, MANIFEST_FILE};
pub use report::FIGURES;
pub use sweep::{
    default_max_new_tokens, evaluate_items, run_ablation, run_sweep, ExperimentSpec, FULL_MODEL, SweepOutput,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoints/model.ckpt";
pub const GROUPS_FILE: &str = "scores/groups.json";
pub const RECORDS_FILE: &str = "eval/records.csv";
pub const ABLATION_RECORDS_FILE: &str = "eval/ablation_records.csv";
pub const RECORDS_JSONL: &str = "eval/records.jsonl";
pub const ABLATION_RECORDS_JSONL: &str = "eval/ablation_records.jsonl";

/// Stage names in pipeline order, as recorded in the manifest.
pub const STAGES: [&str; 6] = ["corpus", "train", "eval", "scores", "ablation", "report"];

/// A run directory together with its configuration and manifest.
pub struct Run {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub manifest: RunManifest,
}

impl Run {
    /// Open or create `dir`. When the configuration differs from the one the
    /// manifest was written for, earlier stage records are discarded.
    pub fn open(dir: &Path, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        std::fs::create_dir_all(dir)?;
        let text = config.to_toml();
        let hash = sha256_hex(text.as_bytes());
        let mut manifest = RunManifest::load_or_default(dir)?;
        if manifest.config_sha256 != hash {
            manifest.stages.clear();
            manifest.config_sha256 = hash;
        }
        manifest.crate_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.checkpoint_version = CHECKPOINT_VERSION;
        write_if_changed(&dir.join(CONFIG_FILE), text.as_bytes())?;
        manifest.save(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            manifest,
        })
    }

    /// Configuration for `dir`: an explicit file wins, then the run's saved
    /// `config.toml`, then the defaults.
    pub fn resolve_config(dir: &Path, explicit: Option<&Path>) -> Result<ExperimentConfig> {
        match explicit {
            Some(p) => ExperimentConfig::load(p),
            None if dir.join(CONFIG_FILE).exists() => ExperimentConfig::load(&dir.join(CONFIG_FILE)),
            None => Ok(ExperimentConfig::default()),
        }
    }

    fn stage(&mut self, name: &str, body: impl FnOnce(&Self, &mut StageOutput, &Path) -> Result<()>) -> Result<()> {
        let scratch = self.dir.join(format!(".{name}.partial"));
        std::fs::create_dir_all(&scratch)?;
        let mut out = StageOutput::default();
        let result = body(self, &mut out, &scratch).and_then(|_| out.commit(&self.dir));
        let _ = std::fs::remove_dir_all(&scratch);
        match result {
            Ok(mut record) => {
                if !self.config.deterministic {
                    record.finished_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
                }
                self.manifest.stages.insert(name.to_string(), record);
                self.manifest.save(&self.dir)
            }
            Err(e) => {
                let failed = StageRecord {
                    status: StageStatus::Failed,
                    error: Some(e.to_string()),
                    files: BTreeMap::new(),
                    rows: BTreeMap::new(),
                    finished_unix: None,
                };
                self.manifest.stages.insert(name.to_string(), failed);
                self.manifest.save(&self.dir)?;
                Err(e)
            }
        }
    }

    pub fn corpus(&self) -> Result<Corpus> {
        self.manifest.require("corpus")?;
        read_corpus(&self.dir.join("corpus"))
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        self.manifest.require("train")?;
        let path = self.dir.join(CHECKPOINT_FILE);
        if !path.exists() {
            return Err(Error::MissingFile(path));
        }
        read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn groups(&self) -> Result<HeadGroups> {
        self.manifest.require("scores")?;
        Ok(serde_json::from_slice(&std::fs::read(self.dir.join(GROUPS_FILE))?)?)
    }

    pub fn gen_corpus(&mut self) -> Result<()> {
        self.stage("corpus", |run, out, scratch| {
            let lex = generate_lexicon(run.config.seed, run.config.lexicon_sizes())?;
            let corpus = build_corpus(&lex, &run.config.corpus_spec())?;
            let dir = scratch.join("corpus");
            write_corpus(&dir, &corpus)?;
            let mut names: Vec<_> = std::fs::read_dir(&dir)?.collect::<std::io::Result<Vec<_>>>()?;
            names.sort_by_key(|e| e.file_name());
            for e in names {
                out.add(format!("corpus/{}", e.file_name().to_string_lossy()), std::fs::read(e.path())?);
            }
            Ok(())
        })
    }

    pub fn train(&mut self) -> Result<()> {
        self.stage("train", |run, out, scratch| {
            let corpus = run.corpus()?;
            let vocab = corpus.vocabulary();
            let cfg = run.config.model_config(vocab.size());
            let outcome = train(&cfg, &corpus.training_sequences(), &run.config.train_hyperparams())?;
            let mut bytes = Vec::new();
            write_checkpoint(&mut bytes, &outcome.checkpoint)?;
            out.add(CHECKPOINT_FILE, bytes);
            out.add_via("checkpoints/loss.csv", scratch, |p| write_loss_csv(p, &outcome.losses))
        })
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        let e = &self.config.eval;
        ExperimentSpec {
            checkpoint: self.dir.join(CHECKPOINT_FILE),
            corpus: self.dir.join("corpus"),
            conditions: self.config.eval_conditions(),
            demos: e.min_demos..=e.max_demos,
            groups: Some(self.dir.join(GROUPS_FILE)),
            seed: self.config.seed,
            max_new_tokens: e.max_new_tokens,
        }
    }

    pub fn eval(&mut self) -> Result<()> {
        self.stage("eval", |run, out, scratch| {
            run.manifest.require("train")?;
            let result = run_sweep(&run.experiment_spec())?;
            out.add_via(RECORDS_FILE, scratch, |p| crate::metrics::write_records_csv(p, &result.records))?;
            out.add(RECORDS_JSONL, jsonl(&result.records)?);
            out.add_via("eval/aggregate.csv", scratch, |p| {
                crate::metrics::write_aggregate_csv(p, &sweep::SWEEP_KEYS, &result.aggregate)
            })
        })
    }

    pub fn score_heads(&mut self) -> Result<()> {
        self.stage("scores", |run, out, scratch| {
            let corpus = run.corpus()?;
            let ckpt = run.checkpoint()?;
            let s = &run.config.scoring;
            let vocab = corpus.vocabulary();
            let seed = run.config.seed;
            let by_condition = scoring_prompts(&corpus, s.n_demos, s.prompts_per_condition, seed)?;
            let all: Vec<(Vec<TokenId>, Vec<Modality>)> = by_condition.iter().flat_map(|(_, p)| p.clone()).collect();
            let sums = model_prompt_sums(&ckpt.params, &all, derive_seed(seed, "scoring/baseline"))?;
            let c = &ckpt.params.config;
            let table = HeadScoreTable::from_prompt_sums(c.n_layers, c.n_heads, &sums);
            let k = if s.k == 0 { default_k(c.total_heads()) } else { s.k };
            let groups = select_head_groups(&table, k, derive_seed(seed, "scoring/random-group"))?;

            let mut split: Vec<(String, Vec<PromptSums>)> = Vec::new();
            let mut rest = sums.as_slice();
            for (cond, prompts) in &by_condition {
                let (head, tail) = rest.split_at(prompts.len());
                split.push((cond.to_string(), head.to_vec()));
                rest = tail;
            }
            let named: Vec<(String, _)> = groups
                .iter()
                .filter(|(_, g)| !g.is_empty())
                .map(|(n, g)| (n.to_string(), g.clone()))
                .collect();
            let report_rows = group_attention_report(c.n_heads, &split, &named)?;

            let rcfg = RandomSequenceConfig {
                mix: s.random_mix,
                length: s.random_length,
                repeats: s.random_repeats,
                sequences: s.random_sequences,
                freq_exclusion: s.freq_exclusion,
                seed: derive_seed(seed, "scoring/random-sequences"),
            };
            let random = score_random_sequences(&ckpt.params, &vocab, &corpus.token_frequencies(), &rcfg)?;

            out.add_via("scores/icl_heads.csv", scratch, |p| table.write_csv(p))?;
            out.add_via("scores/heatmap_speech.csv", scratch, |p| table.write_heatmap_csv(p, Modality::Speech))?;
            out.add_via("scores/heatmap_text.csv", scratch, |p| table.write_heatmap_csv(p, Modality::Text))?;
            out.add_via("scores/group_attention.csv", scratch, |p| write_group_report_csv(p, &report_rows))?;
            out.add("scores/icl_heads.json", pretty(&table)?);
            out.add("scores/random_heads.json", pretty(&random)?);
            out.add(GROUPS_FILE, pretty(&groups)?);
            Ok(())
        })
    }

    pub fn ablate(&mut self) -> Result<()> {
        self.stage("ablation", |run, out, scratch| {
            run.manifest.require("train")?;
            let groups = run.groups()?;
            let a = &run.config.ablation;
            let mut spec = run.experiment_spec();
            spec.conditions = a.conditions.clone();
            let records = run_ablation(&spec, &groups, &a.n_demos)?;
            let summary = crate::metrics::aggregate(
                &records,
                &[crate::metrics::GroupKey::Ablation],
                &[crate::metrics::Metric::Wer, crate::metrics::Metric::ContentWordRecall],
                derive_seed(run.config.seed, "bootstrap/ablation"),
            )?;
            out.add_via(ABLATION_RECORDS_FILE, scratch, |p| crate::metrics::write_records_csv(p, &records))?;
            out.add(ABLATION_RECORDS_JSONL, jsonl(&records)?);
            out.add_via("eval/ablation_summary.csv", scratch, |p| {
                crate::metrics::write_aggregate_csv(p, &[crate::metrics::GroupKey::Ablation], &summary)
            })
        })
    }

    pub fn report(&mut self) -> Result<()> {
        for s in ["eval", "scores", "ablation"] {
            self.manifest.require(s)?;
        }
        self.stage("report", |run, out, scratch| report::emit(run, out, scratch))
    }

    fn run_stage(&mut self, stage: &str) -> Result<()> {
        match stage {
            "corpus" => self.gen_corpus(),
            "train" => self.train(),
            "eval" => self.eval(),
            "scores" => self.score_heads(),
            "ablation" => self.ablate(),
            "report" => self.report(),
            other => Err(Error::Config(format!("unknown stage {other}"))),
        }
    }

    /// Every stage in order.
    pub fn run_all(&mut self) -> Result<()> {
        STAGES.iter().try_for_each(|s| self.run_stage(s))
    }

    /// Stages without a complete record, in order. Once one stage reruns,
    /// every later stage reruns too.
    pub fn run_pending(&mut self) -> Result<()> {
        let mut stale = false;
        for s in STAGES {
            stale |= self.manifest.require(s).is_err();
            if stale {
                self.run_stage(s)?;
            }
        }
        Ok(())
    }
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Scoring sequences for the core, fast and slow conditions: `per_condition`
/// eval items with `n_demos` demonstrations, each prompt followed by the
/// reference continuation.
pub fn scoring_prompts(
    corpus: &Corpus,
    n_demos: usize,
    per_condition: usize,
    seed: u64,
) -> Result<Vec<(Condition, Vec<(Vec<TokenId>, Vec<Modality>)>)>> {
    let vocab = corpus.vocabulary();
    let mut out = Vec::new();
    for cond in [Condition::Core, Condition::RateFast, Condition::RateSlow] {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("scoring/{cond}")));
        let mut items: Vec<_> = corpus
            .eval_for(cond)
            .filter(|e| e.n_demos == n_demos)
            .choose_multiple(&mut rng, per_condition);
        if items.is_empty() {
            return Err(Error::MissingCondition(format!("{cond} with {n_demos} demonstrations")));
        }
        items.sort_by(|a, b| a.id.cmp(&b.id));
        let mut prompts = Vec::with_capacity(items.len());
        for e in items {
            let p = build_prompt(&e.item, &corpus.lexicon, &vocab, usize::MAX)?;
            let mut tokens = p.tokens;
            tokens.extend(target_continuation(&e.item, &corpus.lexicon, &vocab)?);
            let modality = tokens.iter().map(|&t| vocab.modality(t)).collect();
            prompts.push((tokens, modality));
        }
        out.push((cond, prompts));
    }
    Ok(out)
}
