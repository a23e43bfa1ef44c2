//! Acceptance suite. Prints one PASS/FAIL line per criterion. Failures are
//! reported but only fail the process when `ACCEPTANCE_STRICT=1`.
//!
//! Trained runs are cached under `target/tmp/acceptance/`; delete that
//! directory to retrain from scratch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speech_icl::acoustics::{extract_intensity, extract_pitch, flatten_pitch, scale_intensity, time_stretch, PitchParams, Waveform};
use speech_icl::corpus::{adjacent_repeats, generate_lexicon, make_item, render_speech, Condition, LexiconSizes, OverlapDegree, Rate, Sentence, Syntax, SyntaxCombo};
use speech_icl::harness::{ExperimentConfig, Run, ABLATION_RECORDS_JSONL, RECORDS_JSONL};
use speech_icl::induction::{prompt_sums, random_repeated_sequence, score_random_sequences, HeadScoreTable, RandomSequenceConfig};
use speech_icl::metrics::{aggregate, content_word_recall, wer, EvalRecord, GroupKey, Metric};
use speech_icl::model::{loss_and_grads, AttentionRecord, HeadRef, ModelConfig, Parameters};
use speech_icl::vocab::{Modality, Vocabulary};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Majority over seeds, with each seed's outcome in the detail line.
fn majority(per_seed: &[(bool, String)]) -> Verdict {
    let wins = per_seed.iter().filter(|(p, _)| *p).count();
    let detail: Vec<String> = per_seed
        .iter()
        .zip(SEEDS)
        .map(|((p, d), s)| format!("seed {s} {}: {d}", if *p { "ok" } else { "no" }))
        .collect();
    verdict(wins >= 2, format!("{wins}/3 seeds; {}", detail.join("; ")))
}

// ---------------------------------------------------------------- criterion 1

fn gradient_check() -> Verdict {
    let t0 = Instant::now();
    let config = ModelConfig {
        n_layers: 1,
        n_heads: 1,
        d_model: 8,
        d_ff: 16,
        max_context: 6,
        vocab_size: 11,
        seed: 3,
    };
    let tokens = [4u32, 9, 2, 10, 4, 6];
    let mask = [true; 5];
    let params = Parameters::<f64>::init(&config).unwrap();
    let (_, grads) = loss_and_grads(&params, &tokens, &mask).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (ti, g) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let mut p = params.clone();
            p.tensors_mut()[ti][i] += h;
            let up = loss_and_grads(&p, &tokens, &mask).unwrap().0;
            p.tensors_mut()[ti][i] -= 2.0 * h;
            let down = loss_and_grads(&p, &tokens, &mask).unwrap().0;
            let n = (up - down) / (2.0 * h);
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(worst < 1e-3 && secs < 60.0, format!("max relative error {worst:.2e} in {secs:.1}s"))
}

// ---------------------------------------------------------------- criterion 2

fn random_rows(len: usize, rng: &mut ChaCha8Rng) -> AttentionRecord {
    let mut a = AttentionRecord::zeros(1, 1, len);
    for i in 0..len {
        let w: Vec<f64> = (0..=i).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let z: f64 = w.iter().sum();
        for (k, v) in w.iter().enumerate() {
            a.set(0, 0, i, k, v / z);
        }
    }
    a
}

fn scorer_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    // ICL scorer against a direct scan for the latest earlier copy
    for _ in 0..50 {
        let len = rng.gen_range(2..60);
        let tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(0..8)).collect();
        let modality: Vec<Modality> = (0..len)
            .map(|_| [Modality::Text, Modality::Speech, Modality::Structural][rng.gen_range(0..3)])
            .collect();
        let att = random_rows(len, &mut rng);
        let table = HeadScoreTable::from_prompt_sums(1, 1, &[prompt_sums(&att, &tokens, &modality, &mut rng)]);
        for m in [Modality::Speech, Modality::Text] {
            let mut s = 0.0;
            let mut c = 0;
            for i in 0..len {
                if modality[i] == m {
                    if let Some(j) = (0..i).rev().find(|&j| tokens[j] == tokens[i]) {
                        s += att.get(0, 0, i, j + 1);
                        c += 1;
                    }
                }
            }
            let want = (c > 0).then(|| s / c as f64);
            match (table.prefix(m, HeadRef::new(0, 0)), want) {
                (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                (None, None) => {}
                _ => worst = f64::INFINITY,
            }
        }
    }
    // random-sequence scorer: the token after the previous repeat is L-1 back
    let vocab = Vocabulary::new(vec!["w".into()], 2, 64).unwrap();
    let cfg = RandomSequenceConfig::default();
    let freqs = vec![1u64; vocab.size()];
    let tokens = random_repeated_sequence(&vocab, &freqs, &cfg, &mut rng).unwrap();
    let modality: Vec<Modality> = tokens.iter().map(|&t| vocab.modality(t)).collect();
    let att = random_rows(tokens.len(), &mut rng);
    let table = HeadScoreTable::from_prompt_sums(1, 1, &[prompt_sums(&att, &tokens, &modality, &mut rng)]);
    let l = cfg.length;
    let want = (l..tokens.len()).map(|i| att.get(0, 0, i, i - l + 1)).sum::<f64>() / (tokens.len() - l) as f64;
    worst = worst.max((table.pooled.prefix[0] - want).abs());
    // perfect induction
    let mut perfect = AttentionRecord::zeros(1, 1, tokens.len());
    for i in 0..tokens.len() {
        perfect.set(0, 0, i, if i >= l { i - l + 1 } else { i }, 1.0);
    }
    let p = HeadScoreTable::from_prompt_sums(1, 1, &[prompt_sums(&perfect, &tokens, &modality, &mut rng)]);
    let exact = p.pooled.prefix[0] == 1.0;
    verdict(worst <= 1e-9 && exact, format!("max deviation {worst:.1e}; perfect induction = {}", p.pooled.prefix[0]))
}

// ------------------------------------------------------ trained runs (3..7, 10)

fn acceptance_config(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = seed;
    c.deterministic = true;
    c.corpus.demo_sets = 1;
    c.corpus.max_demos = 2;
    c.corpus.max_len = 256;
    c.corpus.train_sequences = 32_000;
    c.model.n_layers = 2;
    c.model.n_heads = 4;
    c.model.d_model = 64;
    c.model.d_ff = 256;
    c.train.steps = 4000;
    c.train.lr = 1e-3;
    c.eval.conditions = vec![Condition::Core, Condition::LexicalOverlap(OverlapDegree::AllWords)];
    c.eval.max_demos = 1;
    c.ablation.n_demos = vec![1];
    c
}

fn cache_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn trained_run(seed: u64) -> Run {
    let t0 = Instant::now();
    let mut run = Run::open(&cache_root().join(format!("seed-{seed}")), acceptance_config(seed)).unwrap();
    run.run_pending().unwrap();
    eprintln!("  [seed {seed} pipeline ready in {:.0}s]", t0.elapsed().as_secs_f64());
    run
}

fn records(run: &Run, file: &str) -> Vec<EvalRecord> {
    std::fs::read_to_string(run.dir.join(file))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn estimates(recs: &[EvalRecord], keys: &[GroupKey], seed: u64) -> BTreeMap<(Vec<String>, &'static str), speech_icl::metrics::Estimate> {
    aggregate(recs, keys, &[Metric::Wer, Metric::ContentWordRecall], seed)
        .unwrap()
        .into_iter()
        .map(|r| ((r.group.into_iter().map(|(_, v)| v).collect(), r.metric.name()), r.estimate))
        .collect()
}

fn key(parts: &[&str], metric: &'static str) -> (Vec<String>, &'static str) {
    (parts.iter().map(|s| s.to_string()).collect(), metric)
}

fn induction_emergence(runs: &[Run]) -> Verdict {
    let mut per_seed = Vec::new();
    for run in runs {
        let t: HeadScoreTable = serde_json::from_slice(&std::fs::read(run.dir.join("scores/random_heads.json")).unwrap()).unwrap();
        let mut v = t.pooled.prefix.clone();
        v.sort_by(f64::total_cmp);
        let max = v[v.len() - 1];
        let median = (v[(v.len() - 1) / 2] + v[v.len() / 2]) / 2.0;
        per_seed.push((max > 0.3 && median < 0.1, format!("max {max:.3} median {median:.3}")));
    }
    let mut out = majority(&per_seed);
    // an untrained model of the same shape
    let run = &runs[0];
    let corpus = run.corpus().unwrap();
    let vocab = corpus.vocabulary();
    let params = Parameters::<f32>::init(&run.config.model_config(vocab.size())).unwrap();
    let cfg = RandomSequenceConfig {
        seed: 99,
        ..Default::default()
    };
    let t = score_random_sequences(&params, &vocab, &corpus.token_frequencies(), &cfg).unwrap();
    let untrained_max = t.pooled.prefix.iter().cloned().fold(0.0, f64::max);
    out.pass &= untrained_max < 0.1;
    out.detail = format!("untrained max {untrained_max:.3}; {}", out.detail);
    out
}

fn one_demo_helps(runs: &[Run]) -> Verdict {
    let per_seed: Vec<(bool, String)> = runs
        .iter()
        .map(|run| {
            let recs: Vec<EvalRecord> = records(run, RECORDS_JSONL).into_iter().filter(|r| r.condition == Condition::Core).collect();
            let e = estimates(&recs, &[GroupKey::NDemos], run.config.seed);
            let (z, o) = (&e[&key(&["0"], "wer")], &e[&key(&["1"], "wer")]);
            (
                o.mean < z.mean && o.separated_from(z),
                format!("WER0 {:.3} [{:.3},{:.3}] WER1 {:.3} [{:.3},{:.3}]", z.mean, z.lo, z.hi, o.mean, o.lo, o.hi),
            )
        })
        .collect();
    majority(&per_seed)
}

fn overlap_helps(runs: &[Run]) -> Verdict {
    let per_seed: Vec<(bool, String)> = runs
        .iter()
        .map(|run| {
            let recs: Vec<EvalRecord> = records(run, RECORDS_JSONL).into_iter().filter(|r| r.n_demos == 1).collect();
            let e = estimates(&recs, &[GroupKey::Condition], run.config.seed);
            let get = |c: &str, m| e[&key(&[c], m)].mean;
            let (cw, aw) = (get("core", "wer"), get("lexical_overlap:all_words", "wer"));
            let (cr, ar) = (get("core", "content_word_recall"), get("lexical_overlap:all_words", "content_word_recall"));
            (aw <= cw && ar >= cr, format!("WER core {cw:.3} all_words {aw:.3}; recall core {cr:.3} all_words {ar:.3}"))
        })
        .collect();
    majority(&per_seed)
}

fn ablation_causality(runs: &[Run]) -> Verdict {
    let per_seed: Vec<(bool, String)> = runs
        .iter()
        .map(|run| {
            let mut mean: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for r in records(run, ABLATION_RECORDS_JSONL) {
                let e = mean.entry(r.ablation).or_default();
                e.0 += r.wer;
                e.1 += 1;
            }
            let m = |k: &str| mean[k].0 / mean[k].1 as f64;
            let (full, sp, rnd) = (m(""), m("speech_prefix_top"), m("random"));
            (
                sp > rnd && full <= rnd + 0.1,
                format!("full {full:.3} speech_prefix_top {sp:.3} random {rnd:.3}"),
            )
        })
        .collect();
    majority(&per_seed)
}

fn rate_mechanism(runs: &[Run]) -> Verdict {
    // exact part, over every sentence shape the generator produces
    let lex = generate_lexicon(0, LexiconSizes::default()).unwrap();
    let mut exact = true;
    for (i, combo) in SyntaxCombo::ALL.iter().enumerate() {
        for s in 0..25u64 {
            let item = make_item(&lex, Condition::Core, *combo, 2, s * 4 + i as u64).unwrap();
            let sentences: Vec<&Sentence> = item.demonstrations.iter().chain([&item.target]).collect();
            for sent in sentences {
                let core = adjacent_repeats(&render_speech(&lex, sent, Rate::Core).unwrap());
                let slow = adjacent_repeats(&render_speech(&lex, sent, Rate::Slow).unwrap());
                exact &= slow >= 2 * core && slow >= core_len(sent);
            }
        }
    }
    let per_seed: Vec<(bool, String)> = runs
        .iter()
        .map(|run| {
            let text = std::fs::read_to_string(run.dir.join("scores/group_attention.csv")).unwrap();
            let mut sums = BTreeMap::new();
            for line in text.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if f[0] == "speech_prefix_top" && f[2] == "speech" {
                    sums.insert(f[1].to_string(), f[3].parse::<f64>().unwrap());
                }
            }
            let (slow, fast) = (sums["rate_slow"], sums["rate_fast"]);
            (slow > fast, format!("prefix sum slow {slow:.2} fast {fast:.2}"))
        })
        .collect();
    let mut out = majority(&per_seed);
    out.pass &= exact;
    out.detail = format!("slow repeats >= 2x core: {exact}; {}", out.detail);
    out
}

fn core_len(s: &Sentence) -> usize {
    s.words.len() * speech_icl::corpus::UNITS_PER_WORD
}

fn determinism() -> Verdict {
    let mut c = ExperimentConfig::default();
    c.deterministic = true;
    c.seed = 5;
    c.corpus.eval_targets = 6;
    c.corpus.demo_sets = 1;
    c.corpus.max_demos = 2;
    c.corpus.train_sequences = 200;
    c.corpus.max_len = 256;
    c.model.n_layers = 2;
    c.model.d_model = 16;
    c.model.d_ff = 32;
    c.train.steps = 30;
    c.scoring.prompts_per_condition = 4;
    c.scoring.random_sequences = 3;
    c.ablation.n_demos = vec![1];
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        Run::open(d.path(), c.clone()).unwrap().run_all().unwrap();
    }
    let csvs = |root: &Path| -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        for sub in ["checkpoints", "eval", "scores", "report"] {
            for e in std::fs::read_dir(root.join(sub)).unwrap() {
                let p = e.unwrap().path();
                if p.extension().is_some_and(|x| x == "csv") {
                    out.insert(format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), std::fs::read(&p).unwrap());
                }
            }
        }
        out
    };
    let (a, b) = (csvs(dirs[0].path()), csvs(dirs[1].path()));
    let manifests_equal = std::fs::read(dirs[0].path().join("manifest.json")).unwrap() == std::fs::read(dirs[1].path().join("manifest.json")).unwrap();
    verdict(a == b && !a.is_empty() && manifests_equal, format!("{} CSV files compared, identical: {}", a.len(), a == b))
}

// ---------------------------------------------------------------- criterion 8

fn voiced(f0: impl Fn(f64) -> f64, amp: impl Fn(f64) -> f64, secs: f64) -> Waveform {
    let fs = 16000;
    let mut phase = 0.0;
    let samples = (0..(secs * fs as f64) as usize)
        .map(|i| {
            let t = i as f64 / fs as f64;
            phase += 2.0 * std::f64::consts::PI * f0(t) / fs as f64;
            let s: f64 = (1..=5).map(|k| (k as f64 * phase).sin() / k as f64).sum();
            amp(t) * s
        })
        .collect();
    Waveform::new(samples, fs).unwrap()
}

fn acoustics_parity() -> Verdict {
    let t0 = Instant::now();
    // utterance-like: gliding pitch with syllabic amplitude modulation
    let utt = |gain: f64| voiced(|t| 140.0 + 30.0 * t, move |t| gain * (0.6 + 0.4 * (2.0 * std::f64::consts::PI * 4.0 * t).sin().abs()), 1.5);
    let probe = extract_intensity(&utt(1.0)).unwrap().mean;
    let w = utt(10f64.powf((67.0 - probe) / 20.0));
    let before = extract_intensity(&w).unwrap().mean;
    let after = extract_intensity(&scale_intensity(&w, 30.0).unwrap()).unwrap().mean;
    let scale_ok = (before - 67.0).abs() < 1.0 && (after - 30.0).abs() <= 0.5;

    let mean_f0 = |w: &Waveform| extract_pitch(w, &PitchParams::default()).unwrap().mean().unwrap();
    let fast = time_stretch(&w, 2.0).unwrap();
    let dur_ratio = fast.duration() / w.duration();
    let (f_in, f_out) = (mean_f0(&w), mean_f0(&fast));
    let stretch_ok = (dur_ratio - 0.5).abs() <= 0.01 && (f_out - f_in).abs() <= 0.05 * f_in;

    let vib = voiced(|t| 200.0 + 20.0 * (2.0 * std::f64::consts::PI * 5.0 * t).sin(), |_| 0.3, 1.5);
    let std_of = |w: &Waveform| extract_pitch(w, &PitchParams::default()).unwrap().std().unwrap();
    let (s_in, s_out) = (std_of(&vib), std_of(&flatten_pitch(&vib).unwrap()));
    let flat_ok = s_out <= 0.1 * s_in;
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        scale_ok && stretch_ok && flat_ok && secs < 30.0,
        format!(
            "intensity {before:.2} -> {after:.2} dB; duration x{dur_ratio:.4}, F0 {f_in:.1} -> {f_out:.1} Hz; F0 std {s_in:.2} -> {s_out:.2} Hz; {secs:.1}s"
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn dp_distance(a: &[&str], b: &[&str]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            d[i][j] = (d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1])).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn metric_exactness() -> Verdict {
    let r = ["a", "secretary", "forgets", "a", "cousin"];
    let h = ["the", "secretary", "forgot", "the", "cousin"];
    let empty: [&str; 0] = [];
    let mut ok = true;
    for (hyp, want) in [(&r[..], 0.0), (&h[..], 0.6), (&empty[..], 1.0)] {
        let got = wer(&r, hyp).unwrap();
        let oracle = dp_distance(&r, hyp) as f64 / r.len() as f64;
        ok &= (got - want).abs() < 1e-12 && (got - oracle).abs() < 1e-12;
    }
    let lex = generate_lexicon(0, LexiconSizes::default()).unwrap();
    let (n0, n1) = (lex.nouns[0].clone(), lex.nouns[1].clone());
    let (v, other) = (&lex.verbs[0], &lex.verbs[1]);
    let s = Sentence::new(&lex, Syntax::Active, speech_icl::corpus::Tense::Present, speech_icl::corpus::Determiner::Indefinite, &n0, &v.lemma, &n1).unwrap();
    let hyp = |verb: &str| vec!["a".to_string(), n0.clone(), verb.to_string(), "a".into(), n1.clone()];
    let cases = [
        (content_word_recall(&s, &hyp(&v.present), &lex).unwrap(), 1.0),
        (content_word_recall(&s, &hyp(&other.present), &lex).unwrap(), 2.0 / 3.0),
        (content_word_recall(&s, &hyp(&v.past), &lex).unwrap(), 1.0),
    ];
    for (got, want) in cases {
        ok &= (got - want).abs() < 1e-12;
    }
    verdict(ok, "WER 0 / 0.6 / 1.0 and recall 1 / 2/3 / lemma match agree with oracles")
}

fn main() {
    let mut results: Vec<(u8, &str, Verdict)> = vec![
        (1, "gradient correctness", gradient_check()),
        (2, "scorer oracle equivalence", scorer_oracles()),
    ];
    let runs: Vec<Run> = SEEDS.iter().map(|&s| trained_run(s)).collect();
    results.push((3, "induction emergence", induction_emergence(&runs)));
    results.push((4, "one demonstration beats zero", one_demo_helps(&runs)));
    results.push((5, "lexical overlap helps", overlap_helps(&runs)));
    results.push((6, "ablation causality", ablation_causality(&runs)));
    results.push((7, "rate and repetition", rate_mechanism(&runs)));
    results.push((8, "acoustics parity", acoustics_parity()));
    results.push((9, "metric exactness", metric_exactness()));
    results.push((10, "determinism", determinism()));
    let mut failed = 0;
    for (n, name, v) in &results {
        println!("criterion {n:>2} {:<4} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
