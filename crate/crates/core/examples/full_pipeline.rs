//! Every stage of a tiny run: corpus, training, evaluation, head scoring,
//! ablation and the report CSVs.
//!
//! cargo run --release --example full_pipeline [run_dir]

use std::path::PathBuf;

use speech_icl::harness::{ExperimentConfig, Run};

fn main() -> speech_icl::error::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("speech-icl-demo"));
    let mut c = ExperimentConfig::default();
    c.deterministic = true;
    c.corpus.eval_targets = 6;
    c.corpus.demo_sets = 1;
    c.corpus.max_demos = 2;
    c.corpus.max_len = 256;
    c.corpus.train_sequences = 400;
    c.model.n_layers = 2;
    c.model.d_model = 32;
    c.model.d_ff = 64;
    c.train.steps = 50;
    c.scoring.prompts_per_condition = 4;
    c.scoring.random_sequences = 3;
    c.ablation.n_demos = vec![1];

    let mut run = Run::open(&dir, c)?;
    run.run_pending()?;
    for (stage, rec) in &run.manifest.stages {
        println!("{stage:<9} {:?} ({} files)", rec.status, rec.files.len());
    }
    let summary = std::fs::read_to_string(dir.join("report/summary.json"))?;
    println!("{summary}");
    Ok(())
}
