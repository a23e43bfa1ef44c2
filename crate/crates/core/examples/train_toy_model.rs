//! Train a small model on a generated corpus, save a checkpoint and
//! generate a continuation for one eval prompt.
//!
//! cargo run --release --example train_toy_model [steps]

use speech_icl::corpus::{build_corpus, generate_lexicon, Condition, CorpusSpec, LexiconSizes, Rate};
use speech_icl::model::{generate, load_checkpoint, save_checkpoint, train, Ablation, GenerationConfig, ModelConfig, TrainHyperparams};
use speech_icl::prompt::Decoder;

fn main() -> speech_icl::error::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lex = generate_lexicon(0, LexiconSizes::default())?;
    let spec = CorpusSpec {
        eval_targets: 4,
        demo_sets: 1,
        max_demos: 2,
        max_len: 256,
        train_sequences: 2000,
        conditions: vec![Condition::Core],
        ..Default::default()
    };
    let corpus = build_corpus(&lex, &spec)?;
    let vocab = corpus.vocabulary();
    let config = ModelConfig { n_layers: 2, n_heads: 4, d_model: 32, d_ff: 128, max_context: 256, vocab_size: vocab.size(), seed: 0 };
    let mut hp = TrainHyperparams { steps, decay_steps: steps, ..Default::default() };
    hp.adam.lr = 1e-3;
    let outcome = train(&config, &corpus.training_sequences(), &hp)?;
    for p in outcome.losses.iter().step_by((steps as usize / 10).max(1)) {
        println!("step {:>5} loss {:.4}", p.step, p.loss);
    }

    let path = std::env::temp_dir().join("toy_model.ckpt");
    save_checkpoint(&path, &outcome.checkpoint)?;
    let ckpt = load_checkpoint(&path)?;
    println!("checkpoint at step {} saved to {}", ckpt.step, path.display());

    let e = corpus.eval_for(Condition::Core).find(|e| e.n_demos == 1).expect("core eval item");
    let gen = GenerationConfig { max_new_tokens: 40, stop_sequences: vec![vocab.stop_sequence(e.item.voice)] };
    let out = generate(&ckpt.params, &e.prompt_tokens, &gen, &Ablation::none(&config))?;
    let decoded = Decoder::new(&lex, &vocab).decode(&out, e.item.voice, &Rate::ALL);
    println!("target: {}\noutput: {}", e.item.target, decoded.words.join(" "));
    Ok(())
}
