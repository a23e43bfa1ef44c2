//! Transcript cleanup, word error rate, content-word recall, and grouped
//! means with bootstrap confidence intervals.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Condition, Lexicon, Sentence, SyntaxCombo};
use crate::error::{Error, Result};

/// Lowercase, drop punctuation, and remove the written `stop` marker.
pub fn cleanup<S: AsRef<str>>(words: &[S]) -> Vec<String> {
    words
        .iter()
        .map(|w| {
            w.as_ref()
                .chars()
                .filter(|c| !c.is_ascii_punctuation())
                .collect::<String>()
                .to_lowercase()
        })
        .filter(|w| !w.is_empty() && w != "stop")
        .collect()
}

/// Minimum word-level edit distance with unit costs.
pub fn edit_distance<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x.as_ref() != y.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate of `hypothesis` against `reference`, both cleaned first.
pub fn wer<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T]) -> Result<f64> {
    let r = cleanup(reference);
    if r.is_empty() {
        return Err(Error::EmptyReference);
    }
    let h = cleanup(hypothesis);
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Fraction of the reference's content lemmas found in the hypothesis,
/// counting repeated lemmas as many times as they occur.
pub fn content_word_recall<T: AsRef<str>>(reference: &Sentence, hypothesis: &[T], lexicon: &Lexicon) -> Result<f64> {
    let mut wanted: HashMap<&str, usize> = HashMap::new();
    for w in &reference.words {
        if !lexicon.is_known(w) {
            return Err(Error::UnknownWord(w.clone()));
        }
        if let Some(l) = lexicon.lemma(w) {
            *wanted.entry(l).or_default() += 1;
        }
    }
    let total: usize = wanted.values().sum();
    if total == 0 {
        return Err(Error::EmptyReference);
    }
    let mut have: HashMap<&str, usize> = HashMap::new();
    for w in cleanup(hypothesis) {
        if let Some(l) = lexicon.lemma(&w) {
            *have.entry(l).or_default() += 1;
        }
    }
    let matched: usize = wanted
        .iter()
        .map(|(l, &n)| n.min(have.get(l).copied().unwrap_or(0)))
        .sum();
    Ok(matched as f64 / total as f64)
}

/// Outcome of one generated target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub condition: Condition,
    pub n_demos: usize,
    pub syntax: SyntaxCombo,
    pub wer: f64,
    pub content_word_recall: f64,
    /// Speech tokens per decoded word; absent when nothing decoded.
    pub output_rate: Option<f64>,
    pub stop_detected: bool,
    pub seed: u64,
    /// Head group ablated for this record, empty for the full model.
    #[serde(default)]
    pub ablation: String,
}

pub const RECORD_HEADER: &str = "item_id,condition,n_demos,syntax,ablation,wer,content_word_recall,output_rate,stop_detected,seed";

impl EvalRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{},{},{}",
            self.item_id,
            self.condition,
            self.n_demos,
            self.syntax,
            self.ablation,
            self.wer,
            self.content_word_recall,
            self.output_rate.map(|r| format!("{r:.6}")).unwrap_or_default(),
            self.stop_detected,
            self.seed
        )
    }
}

pub fn write_records_csv(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Condition,
    NDemos,
    Syntax,
    Ablation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Wer,
    ContentWordRecall,
    OutputRate,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Wer, Metric::ContentWordRecall, Metric::OutputRate];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Wer => "wer",
            Metric::ContentWordRecall => "content_word_recall",
            Metric::OutputRate => "output_rate",
        }
    }

    pub fn value(self, r: &EvalRecord) -> Option<f64> {
        match self {
            Metric::Wer => Some(r.wer),
            Metric::ContentWordRecall => Some(r.content_word_recall),
            Metric::OutputRate => r.output_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Estimate {
    /// Whether the two confidence intervals are disjoint.
    pub fn separated_from(&self, other: &Estimate) -> bool {
        self.hi < other.lo || other.hi < self.lo
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Mean with a 95% percentile bootstrap interval.
pub fn bootstrap_mean(values: &[f64], resamples: usize, seed: u64) -> Result<Estimate> {
    if values.len() < 2 {
        return Err(Error::EmptyGroup(format!("{} values", values.len())));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    // percentile bounds can miss the sample mean on tiny skewed groups
    Ok(Estimate {
        mean,
        lo: at(0.025).min(mean),
        hi: at(0.975).max(mean),
        n,
    })
}

/// One aggregate row: group key values plus the estimate for one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: Vec<(GroupKey, String)>,
    pub metric: Metric,
    pub estimate: Estimate,
}

fn key_value(r: &EvalRecord, k: GroupKey) -> String {
    match k {
        GroupKey::Condition => r.condition.to_string(),
        GroupKey::NDemos => r.n_demos.to_string(),
        GroupKey::Syntax => r.syntax.to_string(),
        GroupKey::Ablation => r.ablation.clone(),
    }
}

/// Group records by `keys` and estimate each metric per group. Groups are
/// emitted in key order; metrics with fewer than two values in a group
/// (output rate when nothing decoded) are skipped, but a group with fewer
/// than two records is an error.
pub fn aggregate(records: &[EvalRecord], keys: &[GroupKey], metrics: &[Metric], seed: u64) -> Result<Vec<AggregateRow>> {
    if records.is_empty() {
        return Err(Error::EmptyGroup("no records".into()));
    }
    let mut groups: BTreeMap<Vec<String>, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(keys.iter().map(|&k| key_value(r, k)).collect()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (vals, rs) in groups {
        let label: Vec<(GroupKey, String)> = keys.iter().copied().zip(vals).collect();
        if rs.len() < 2 {
            return Err(Error::EmptyGroup(format!("{label:?}")));
        }
        for &m in metrics {
            let v: Vec<f64> = rs.iter().filter_map(|r| m.value(r)).collect();
            if v.len() < 2 && m == Metric::OutputRate {
                continue;
            }
            out.push(AggregateRow {
                group: label.clone(),
                metric: m,
                estimate: bootstrap_mean(&v, BOOTSTRAP_RESAMPLES, seed)?,
            });
        }
    }
    Ok(out)
}

pub fn write_aggregate_csv(path: &Path, keys: &[GroupKey], rows: &[AggregateRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let names: Vec<String> = keys
        .iter()
        .map(|k| serde_json::to_value(k).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect();
    writeln!(w, "{},metric,mean,ci_lo,ci_hi,n", names.join(","))?;
    for r in rows {
        let vals: Vec<&str> = r.group.iter().map(|(_, v)| v.as_str()).collect();
        let e = &r.estimate;
        writeln!(w, "{},{},{:.6},{:.6},{:.6},{}", vals.join(","), r.metric.name(), e.mean, e.lo, e.hi, e.n)?;
    }
    w.flush()?;
    Ok(())
}
