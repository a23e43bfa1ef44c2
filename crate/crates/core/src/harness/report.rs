use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use super::{pretty, Run, StageOutput, ABLATION_RECORDS_JSONL, RECORDS_JSONL};
use crate::corpus::{Condition, OverlapDegree};
use crate::error::Result;
use crate::induction::{HeadGroups, HeadScoreTable};
use crate::metrics::{aggregate, write_aggregate_csv, AggregateRow, EvalRecord, GroupKey, Metric};
use crate::seed::derive_seed;
use crate::vocab::Modality;

/// Report files, one per figure, under `report/`.
pub const FIGURES: [&str; 9] = [
    "fig2a_core_demos.csv",
    "fig2b_syntax.csv",
    "fig2c_overlap.csv",
    "fig2d_rate.csv",
    "fig3_output_rate.csv",
    "fig4a_head_scores.csv",
    "fig4b_ablation.csv",
    "figa4_random_heads.csv",
    "figa5_group_attention.csv",
];

const RATES: [Condition; 3] = [Condition::Core, Condition::RateFast, Condition::RateSlow];
const QUALITY: [Metric; 2] = [Metric::Wer, Metric::ContentWordRecall];

fn read_jsonl<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Aggregate `records` into `report/<name>`; no records gives a header-only file.
fn figure(
    out: &mut StageOutput,
    scratch: &Path,
    name: &str,
    records: &[EvalRecord],
    keys: &[GroupKey],
    metrics: &[Metric],
    seed: u64,
) -> Result<Vec<AggregateRow>> {
    let rows = if records.is_empty() {
        Vec::new()
    } else {
        aggregate(records, keys, metrics, derive_seed(seed, name))?
    };
    out.add_via(&format!("report/{name}"), scratch, |p| write_aggregate_csv(p, keys, &rows))?;
    Ok(rows)
}

fn head_scores_csv(table: &HeadScoreTable, groups: &HeadGroups) -> Vec<u8> {
    let mut s = String::from("layer,head,speech_prefix,speech_nonprefix,text_prefix,text_nonprefix,groups\n");
    for h in table.heads() {
        let v = |x: Option<f64>| x.map(|x| format!("{x:.9}")).unwrap_or_default();
        let member: Vec<&str> = groups.iter().filter(|(_, g)| g.contains(&h)).map(|(n, _)| n).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            h.layer,
            h.head,
            v(table.prefix(Modality::Speech, h)),
            v(table.nonprefix(Modality::Speech, h)),
            v(table.prefix(Modality::Text, h)),
            v(table.nonprefix(Modality::Text, h)),
            member.join(";")
        );
    }
    s.into_bytes()
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

fn mean_of(rows: &[AggregateRow], metric: Metric, group: &[&str]) -> Option<f64> {
    rows.iter()
        .find(|r| r.metric == metric && r.group.iter().map(|(_, v)| v.as_str()).eq(group.iter().copied()))
        .map(|r| r.estimate.mean)
}

pub(super) fn emit(run: &Run, out: &mut StageOutput, scratch: &Path) -> Result<()> {
    let dir = &run.dir;
    let seed = run.config.seed;
    let records: Vec<EvalRecord> = read_jsonl(&dir.join(RECORDS_JSONL))?;
    let ablation: Vec<EvalRecord> = read_jsonl(&dir.join(ABLATION_RECORDS_JSONL))?
        .into_iter()
        .map(|mut r: EvalRecord| {
            if r.ablation.is_empty() {
                r.ablation = "full".into();
            }
            r
        })
        .collect();
    let table: HeadScoreTable = serde_json::from_slice(&std::fs::read(dir.join("scores/icl_heads.json"))?)?;
    let random: HeadScoreTable = serde_json::from_slice(&std::fs::read(dir.join("scores/random_heads.json"))?)?;
    let groups = run.groups()?;

    let only = |conds: &[Condition], n: Option<usize>| -> Vec<EvalRecord> {
        records
            .iter()
            .filter(|r| conds.contains(&r.condition) && n.map_or(true, |n| r.n_demos == n))
            .cloned()
            .collect()
    };
    let core = only(&[Condition::Core], None);
    let demos = figure(out, scratch, FIGURES[0], &core, &[GroupKey::NDemos], &QUALITY, seed)?;
    figure(out, scratch, FIGURES[1], &core, &[GroupKey::Syntax, GroupKey::NDemos], &QUALITY, seed)?;
    let mut overlap_conds = vec![Condition::Core];
    for d in OverlapDegree::ALL {
        overlap_conds.push(Condition::LexicalOverlap(d));
        overlap_conds.push(Condition::SemanticSimilarity(d));
    }
    let overlap = figure(
        out,
        scratch,
        FIGURES[2],
        &only(&overlap_conds, Some(1)),
        &[GroupKey::Condition],
        &QUALITY,
        seed,
    )?;
    let rate_records = only(&RATES, None);
    let rate_keys = [GroupKey::Condition, GroupKey::NDemos];
    figure(out, scratch, FIGURES[3], &rate_records, &rate_keys, &QUALITY, seed)?;
    let out_rate = figure(out, scratch, FIGURES[4], &rate_records, &rate_keys, &[Metric::OutputRate], seed)?;
    out.add(format!("report/{}", FIGURES[5]), head_scores_csv(&table, &groups));
    let abl = figure(
        out,
        scratch,
        FIGURES[6],
        &ablation,
        &[GroupKey::Ablation, GroupKey::NDemos],
        &QUALITY,
        seed,
    )?;
    let mut rnd = String::from("layer,head,prefix_score\n");
    for h in random.heads() {
        let _ = writeln!(rnd, "{},{},{:.9}", h.layer, h.head, random.pooled.prefix[h.layer * random.n_heads + h.head]);
    }
    out.add(format!("report/{}", FIGURES[7]), rnd.into_bytes());
    out.add(format!("report/{}", FIGURES[8]), std::fs::read(dir.join("scores/group_attention.csv"))?);

    let mut sorted = random.pooled.prefix.clone();
    sorted.sort_by(f64::total_cmp);
    let median = median(&sorted);
    let by_n: BTreeMap<String, Option<f64>> = demos
        .iter()
        .filter(|r| r.metric == Metric::Wer)
        .map(|r| (r.group[0].1.clone(), Some(r.estimate.mean)))
        .collect();
    let ablation_wer: BTreeMap<String, f64> = abl
        .iter()
        .filter(|r| r.metric == Metric::Wer)
        .map(|r| (format!("{}@{}", r.group[0].1, r.group[1].1), r.estimate.mean))
        .collect();
    let summary = json!({
        "seed": seed,
        "core_wer_by_demos": by_n,
        "overlap_wer_at_one_demo": overlap.iter().filter(|r| r.metric == Metric::Wer)
            .map(|r| (r.group[0].1.clone(), r.estimate.mean)).collect::<BTreeMap<_, _>>(),
        "output_rate_at_max_demos": RATES.iter().map(|c| {
            let n = run.config.eval.max_demos.min(run.config.corpus.max_demos).to_string();
            (c.to_string(), mean_of(&out_rate, Metric::OutputRate, &[&c.to_string(), &n]))
        }).collect::<BTreeMap<_, _>>(),
        "ablation_wer": ablation_wer,
        "random_sequence_prefix": {
            "max": sorted.last().copied(),
            "median": median,
        },
        "groups": groups.iter().map(|(n, g)| (n, g.iter().map(|h| h.to_string()).collect::<Vec<_>>()))
            .collect::<BTreeMap<_, _>>(),
    });
    out.add("report/summary.json", pretty(&summary)?);
    Ok(())
}
