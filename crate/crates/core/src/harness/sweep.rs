use std::collections::BTreeSet;
use std::ops::RangeInclusive;
use std::path::PathBuf;

use crate::corpus::{read_corpus, Condition, Corpus, EvalItem, Rate};
use crate::error::{Error, Result};
use crate::induction::HeadGroups;
use crate::metrics::{aggregate, content_word_recall, wer, AggregateRow, EvalRecord, GroupKey, Metric};
use crate::model::{generate, load_checkpoint, Ablation, GenerationConfig, Parameters};
use crate::prompt::{measure_output_rate, Decoder};
use crate::seed::derive_seed;

/// Label of full-model records in ablation output.
pub const FULL_MODEL: &str = "";

/// Grouping of `eval/aggregate.csv`.
pub const SWEEP_KEYS: [GroupKey; 2] = [GroupKey::Condition, GroupKey::NDemos];

/// What to evaluate: a checkpoint, a corpus, and the slice of its eval grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub conditions: Vec<Condition>,
    pub demos: RangeInclusive<usize>,
    pub groups: Option<PathBuf>,
    pub seed: u64,
    /// 0 picks [`default_max_new_tokens`].
    pub max_new_tokens: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<EvalRecord>,
    pub aggregate: Vec<AggregateRow>,
}

/// Enough tokens for the longest target at the slowest rate plus the stop.
pub fn default_max_new_tokens(corpus: &Corpus) -> usize {
    let words = corpus.eval.iter().map(|e| e.item.target.words.len()).max().unwrap_or(0);
    let slow = Rate::Slow.units_per_word(crate::corpus::UNITS_PER_WORD);
    words * slow + crate::vocab::STOP_UNITS.len() + 8
}

/// Greedy generation and scoring for each item, under `ablation`.
pub fn evaluate_items(
    params: &Parameters<f32>,
    corpus: &Corpus,
    items: &[&EvalItem],
    ablation: (&str, &Ablation),
    max_new_tokens: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    let vocab = corpus.vocabulary();
    let decoder = Decoder::new(&corpus.lexicon, &vocab);
    let ctx = params.config.max_context;
    let mut out = Vec::with_capacity(items.len());
    for e in items {
        let room = ctx.saturating_sub(e.prompt_tokens.len());
        if room == 0 {
            return Err(Error::PromptTooLong {
                len: e.prompt_tokens.len(),
                max: ctx,
            });
        }
        let gen = GenerationConfig {
            max_new_tokens: max_new_tokens.min(room),
            stop_sequences: vec![vocab.stop_sequence(e.item.voice)],
        };
        let tokens = generate(params, &e.prompt_tokens, &gen, ablation.1)?;
        let decoded = decoder.decode(&tokens, e.item.voice, &Rate::ALL);
        let target = &e.item.target;
        out.push(EvalRecord {
            item_id: e.id.clone(),
            condition: e.item.condition,
            n_demos: e.n_demos,
            syntax: e.item.combo,
            wer: wer(&target.words, &decoded.words)?,
            content_word_recall: content_word_recall(target, &decoded.words, &corpus.lexicon)?,
            output_rate: measure_output_rate(&decoded).ok(),
            stop_detected: decoded.stop_detected,
            seed,
            ablation: ablation.0.to_string(),
        });
    }
    Ok(out)
}

fn select<'a>(corpus: &'a Corpus, conditions: &[Condition], demos: impl Fn(usize) -> bool) -> Result<Vec<&'a EvalItem>> {
    let present: BTreeSet<Condition> = corpus.eval.iter().map(|e| e.item.condition).collect();
    let mut items = Vec::new();
    for &c in conditions {
        if !present.contains(&c) {
            return Err(Error::MissingCondition(c.to_string()));
        }
        items.extend(corpus.eval_for(c).filter(|e| demos(e.n_demos)));
    }
    Ok(items)
}

fn load(spec: &ExperimentSpec) -> Result<(Parameters<f32>, Corpus, usize)> {
    let corpus = read_corpus(&spec.corpus)?;
    if !spec.checkpoint.exists() {
        return Err(Error::MissingFile(spec.checkpoint.clone()));
    }
    let params = load_checkpoint(&spec.checkpoint)?.params;
    let budget = match spec.max_new_tokens {
        0 => default_max_new_tokens(&corpus),
        n => n,
    };
    Ok((params, corpus, budget))
}

/// Evaluate the full model over the selected conditions and demonstration counts.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutput> {
    let (params, corpus, budget) = load(spec)?;
    let items = select(&corpus, &spec.conditions, |n| spec.demos.contains(&n))?;
    if items.is_empty() {
        return Err(Error::EmptyGroup("no eval items in the requested range".into()));
    }
    let none = Ablation::none(&params.config);
    let records = evaluate_items(&params, &corpus, &items, (FULL_MODEL, &none), budget, spec.seed)?;
    let aggregate = aggregate(&records, &SWEEP_KEYS, &Metric::ALL, derive_seed(spec.seed, "bootstrap/sweep"))?;
    Ok(SweepOutput { records, aggregate })
}

/// Evaluate the full model and each head group ablated. An empty group
/// leaves the model unchanged, so its records repeat the full model's.
pub fn run_ablation(spec: &ExperimentSpec, groups: &HeadGroups, n_demos: &[usize]) -> Result<Vec<EvalRecord>> {
    let (params, corpus, budget) = load(spec)?;
    let items = select(&corpus, &spec.conditions, |n| n_demos.contains(&n))?;
    if items.is_empty() {
        return Err(Error::EmptyGroup("no eval items for ablation".into()));
    }
    let none = Ablation::none(&params.config);
    let full = evaluate_items(&params, &corpus, &items, (FULL_MODEL, &none), budget, spec.seed)?;
    let mut out = full.clone();
    for (name, heads) in groups.iter() {
        if heads.is_empty() {
            out.extend(full.iter().cloned().map(|mut r| {
                r.ablation = name.to_string();
                r
            }));
            continue;
        }
        let ab = Ablation::new(&params.config, heads)?;
        out.extend(evaluate_items(&params, &corpus, &items, (name, &ab), budget, spec.seed)?);
    }
    Ok(out)
}
