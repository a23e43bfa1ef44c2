//! Zero attention heads and watch the next-token distribution change.
//!
//! cargo run --release --example head_ablation

use speech_icl::model::{forward, Ablation, HeadRef, ModelConfig, Parameters};

fn main() -> speech_icl::error::Result<()> {
    let config = ModelConfig { n_layers: 2, n_heads: 4, d_model: 32, d_ff: 64, max_context: 64, vocab_size: 50, seed: 7 };
    let params = Parameters::<f32>::init(&config)?;
    let tokens: Vec<u32> = (0..20).map(|i| (i * 7 % 50) as u32).collect();
    let last = |ab: &Ablation| -> speech_icl::error::Result<Vec<f32>> {
        let f = forward(&params, &tokens, false, ab)?;
        Ok(f.row(f.seq_len - 1).to_vec())
    };
    let full = last(&Ablation::none(&config))?;
    for heads in [vec![HeadRef::new(0, 0)], vec![HeadRef::new(1, 2), HeadRef::new(1, 3)]] {
        let ab = Ablation::new(&config, &heads)?;
        let shift = full.iter().zip(last(&ab)?).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        let names: Vec<String> = heads.iter().map(|h| h.to_string()).collect();
        println!("ablating {:<12} max logit change {shift:.5}", names.join(","));
    }
    let all = last(&Ablation::all(&config))?;
    let shift = full.iter().zip(&all).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    println!("ablating every head max logit change {shift:.5}");
    Ok(())
}
