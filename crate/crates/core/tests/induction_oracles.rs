use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use speech_icl::induction::*;
use speech_icl::model::{AttentionRecord, HeadRef};
use speech_icl::vocab::{Modality, Vocabulary};

const TOL: f64 = 1e-9;

/// Reference scorer written without the library's helpers: scan back for
/// the latest earlier copy of each token, read the weight after it.
fn brute_prefix(att: &AttentionRecord, tokens: &[u32], modality: &[Modality], layer: usize, head: usize, m: Modality) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..tokens.len() {
        if modality[i] != m {
            continue;
        }
        if let Some(j) = (0..i).rev().find(|&j| tokens[j] == tokens[i]) {
            sum += att.get(layer, head, i, j + 1);
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

fn stochastic_rows(n_layers: usize, n_heads: usize, len: usize, raw: &[f64]) -> AttentionRecord {
    let mut a = AttentionRecord::zeros(n_layers, n_heads, len);
    let mut it = raw.iter().cycle();
    for l in 0..n_layers {
        for h in 0..n_heads {
            for i in 0..len {
                let w: Vec<f64> = (0..=i).map(|_| it.next().unwrap() + 1e-3).collect();
                let z: f64 = w.iter().sum();
                for (k, v) in w.iter().enumerate() {
                    a.set(l, h, i, k, v / z);
                }
            }
        }
    }
    a
}

fn fixture() -> impl Strategy<Value = (Vec<u32>, Vec<Modality>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|len| {
        (
            prop::collection::vec(0u32..6, len),
            prop::collection::vec(prop_oneof![Just(Modality::Text), Just(Modality::Speech), Just(Modality::Structural)], len),
            prop::collection::vec(0.0f64..1.0, 64),
        )
    })
}

proptest! {
    #[test]
    fn prefix_scores_match_brute_force((tokens, modality, raw) in fixture()) {
        let att = stochastic_rows(2, 2, tokens.len(), &raw);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sums = prompt_sums(&att, &tokens, &modality, &mut rng);
        let table = HeadScoreTable::from_prompt_sums(2, 2, &[sums]);
        for l in 0..2 {
            for h in 0..2 {
                for m in [Modality::Speech, Modality::Text] {
                    let got = table.prefix(m, HeadRef::new(l, h));
                    let want = brute_prefix(&att, &tokens, &modality, l, h, m);
                    match (got, want) {
                        (Some(g), Some(w)) => prop_assert!((g - w).abs() <= TOL, "{} vs {}", g, w),
                        (None, None) => {}
                        other => prop_assert!(false, "presence mismatch {:?}", other),
                    }
                    if let Some(g) = got {
                        prop_assert!((0.0..=1.0 + TOL).contains(&g));
                    }
                }
            }
        }
    }

    /// Rows put `p` on the prefix key and spread the rest evenly, so the
    /// baseline reads the same value wherever it lands.
    #[test]
    fn nonprefix_matches_closed_form((tokens, modality, raw) in fixture(), seed in any::<u64>()) {
        let len = tokens.len();
        let mut att = AttentionRecord::zeros(1, 1, len);
        let mut want = 0.0;
        let mut count = 0;
        for i in 0..len {
            let key = (0..i).rev().find(|&j| tokens[j] == tokens[i]).map(|j| j + 1);
            let p = raw[i % raw.len()];
            match key {
                Some(k) if i > 0 => {
                    let rest = (1.0 - p) / i as f64;
                    for c in 0..=i {
                        att.set(0, 0, i, c, if c == k { p } else { rest });
                    }
                    if modality[i] != Modality::Structural {
                        want += rest;
                        count += 1;
                    }
                }
                _ => {
                    for c in 0..=i {
                        att.set(0, 0, i, c, 1.0 / (i + 1) as f64);
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sums = prompt_sums(&att, &tokens, &modality, &mut rng);
        let got = sums.speech.nonprefix[0] + sums.text.nonprefix[0];
        prop_assert_eq!(sums.speech.count + sums.text.count, count);
        prop_assert!((got - want).abs() <= TOL, "{} vs {}", got, want);
    }

    #[test]
    fn random_group_is_disjoint_from_reserved(scores in prop::collection::vec(0.0f64..1.0, 4 * 16), seed in any::<u64>()) {
        let table = table_from(2, 8, &scores);
        let g = select_head_groups(&table, 2, seed).unwrap();
        for (name, set) in g.iter() {
            if name != "random" {
                prop_assert!(g.random.is_disjoint(set), "{} overlaps random", name);
            }
        }
        prop_assert_eq!(g.random.len(), 2);
    }
}

/// Table with scores laid out as [speech prefix, text prefix, speech non-prefix, text non-prefix] per head.
fn table_from(n_layers: usize, n_heads: usize, scores: &[f64]) -> HeadScoreTable {
    let n = n_layers * n_heads;
    let bucket = |off: usize| BucketSums {
        prefix: scores[off * n..(off + 1) * n].to_vec(),
        nonprefix: scores[(off + 2) * n..(off + 3) * n].to_vec(),
        count: 1,
    };
    HeadScoreTable::from_prompt_sums(n_layers, n_heads, &[PromptSums { speech: bucket(0), text: bucket(1) }])
}

fn perfect_induction(tokens: &[u32]) -> AttentionRecord {
    let n = tokens.len();
    let mut a = AttentionRecord::zeros(1, 2, n);
    for i in 0..n {
        // head 0 copies, head 1 attends to itself
        match (0..i).rev().find(|&j| tokens[j] == tokens[i]) {
            Some(j) => a.set(0, 0, i, j + 1, 1.0),
            None => a.set(0, 0, i, i, 1.0),
        }
        a.set(0, 1, i, i, 1.0);
    }
    a
}

#[test]
fn perfect_induction_scores_one() {
    let vocab = Vocabulary::new(vec!["a".into(), "b".into()], 2, 64).unwrap();
    let freqs = vec![1u64; vocab.size()];
    let cfg = RandomSequenceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tokens = random_repeated_sequence(&vocab, &freqs, &cfg, &mut rng).unwrap();
    let modality: Vec<Modality> = tokens.iter().map(|&t| vocab.modality(t)).collect();
    let sums = prompt_sums(&perfect_induction(&tokens), &tokens, &modality, &mut rng);
    assert_eq!(sums.speech.count, 150);
    let table = HeadScoreTable::from_prompt_sums(1, 2, &[sums]);
    assert_eq!(table.pooled.prefix[0], 1.0);
    assert_eq!(table.pooled.nonprefix[0], 0.0);
    assert_eq!(table.pooled.prefix[1], 0.0);
}

#[test]
fn uniform_attention_has_closed_form_score() {
    let (l, reps) = (50usize, 4usize);
    let tokens: Vec<u32> = (0..l as u32).cycle().take(l * reps).collect();
    let modality = vec![Modality::Speech; tokens.len()];
    let mut a = AttentionRecord::zeros(1, 1, tokens.len());
    for i in 0..tokens.len() {
        for k in 0..=i {
            a.set(0, 0, i, k, 1.0 / (i + 1) as f64);
        }
    }
    let sums = prompt_sums(&a, &tokens, &modality, &mut ChaCha8Rng::seed_from_u64(0));
    let table = HeadScoreTable::from_prompt_sums(1, 1, &[sums]);
    let want = (l..l * reps).map(|i| 1.0 / (i + 1) as f64).sum::<f64>() / (l * (reps - 1)) as f64;
    assert!((table.pooled.prefix[0] - want).abs() <= TOL);
    assert!((table.pooled.nonprefix[0] - want).abs() <= TOL);
}

#[test]
fn zero_speech_repeats_leave_speech_absent() {
    let tokens = [3u32, 4, 3, 70, 71];
    let modality = [Modality::Text, Modality::Text, Modality::Text, Modality::Speech, Modality::Speech];
    let a = perfect_induction(&tokens);
    let sums = prompt_sums(&a, &tokens, &modality, &mut ChaCha8Rng::seed_from_u64(0));
    let table = HeadScoreTable::from_prompt_sums(1, 2, &[sums]);
    assert_eq!(table.speech.count, 0);
    assert!(table.prefix(Modality::Speech, HeadRef::new(0, 0)).is_none());
    assert_eq!(table.prefix(Modality::Text, HeadRef::new(0, 0)), Some(1.0));
}

#[test]
fn single_earlier_occurrence_reads_its_successor() {
    let tokens = [9u32, 1, 2, 9];
    let q = qualifying_positions(&tokens, &[Modality::Speech; 4]);
    assert_eq!(q.len(), 1);
    assert_eq!(q[0].prefix_key(), 1);
}

#[test]
fn groups_match_exhaustive_sort() {
    // one layer, four heads
    let sp = [0.9, 0.1, 0.5, 0.5];
    let tp = [0.2, 0.8, 0.7, 0.1];
    let sn = [0.0, 0.3, 0.1, 0.0];
    let tn = [0.0, 0.3, 0.0, 0.05];
    let scores: Vec<f64> = sp.iter().chain(&tp).chain(&sn).chain(&tn).copied().collect();
    let table = table_from(1, 4, &scores);
    let brute = |s: &dyn Fn(usize) -> f64| -> BTreeSet<HeadRef> {
        let mut best: Vec<usize> = (0..4).collect();
        best.sort_by(|&a, &b| s(b).partial_cmp(&s(a)).unwrap().then(a.cmp(&b)));
        best[..1].iter().map(|&h| HeadRef::new(0, h)).collect()
    };
    let g = select_head_groups(&table, 1, 0).unwrap();
    assert_eq!(g.speech_prefix_top, brute(&|h| sp[h]));
    assert_eq!(g.text_prefix_top, brute(&|h| tp[h]));
    assert_eq!(g.non_prefix_top, brute(&|h| sn[h] + tn[h]));
    assert_eq!(g.speech_unique, g.speech_prefix_top);
    assert!(!g.random.contains(&HeadRef::new(0, 0)));

    // ties at 0.5 go to the lower head index
    let g = select_head_groups(&table, 2, 0);
    assert!(g.is_err(), "only one head left for a random group of two");
    let scores: Vec<f64> = [0.5, 0.1, 0.5, 0.1].iter().chain(&[0.5, 0.1, 0.5, 0.1]).chain(&[0.0; 8]).copied().collect();
    let g = select_head_groups(&table_from(1, 4, &scores), 1, 0).unwrap();
    assert_eq!(g.speech_prefix_top, [HeadRef::new(0, 0)].into());
    assert!(g.speech_unique.is_empty() && g.text_unique.is_empty());
}

#[test]
fn group_report_is_additive_and_zero_on_zero_attention() {
    let tokens = [1u32, 2, 1, 2, 1];
    let modality = [Modality::Speech; 5];
    let a = perfect_induction(&tokens);
    let sums = prompt_sums(&a, &tokens, &modality, &mut ChaCha8Rng::seed_from_u64(0));
    let zero = prompt_sums(&AttentionRecord::zeros(1, 2, 5), &tokens, &modality, &mut ChaCha8Rng::seed_from_u64(0));
    let h0: BTreeSet<HeadRef> = [HeadRef::new(0, 0)].into();
    let h1: BTreeSet<HeadRef> = [HeadRef::new(0, 1)].into();
    let both: BTreeSet<HeadRef> = h0.union(&h1).copied().collect();
    let groups = vec![("a".to_string(), h0), ("b".to_string(), h1), ("ab".to_string(), both)];
    let rows = group_attention_report(2, &[("core".into(), vec![sums]), ("zero".into(), vec![zero])], &groups).unwrap();
    let get = |g: &str, c: &str| rows.iter().find(|r| r.group == g && r.condition == c && r.modality == Modality::Speech).unwrap();
    assert_eq!(get("a", "core").prefix_sum, 3.0);
    assert!((get("ab", "core").nonprefix_sum - get("a", "core").nonprefix_sum - get("b", "core").nonprefix_sum).abs() <= TOL);
    assert!(rows.iter().filter(|r| r.condition == "zero").all(|r| r.prefix_sum == 0.0 && r.nonprefix_sum == 0.0));
    assert!(group_attention_report(2, &[], &[("e".into(), BTreeSet::new())]).is_err());
}
