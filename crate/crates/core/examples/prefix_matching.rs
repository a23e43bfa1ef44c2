//! Prefix-matching scores on a hand-built attention pattern and on an
//! untrained model over repeated random sequences.
//!
//! cargo run --release --example prefix_matching

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use speech_icl::corpus::{generate_lexicon, LexiconSizes};
use speech_icl::induction::{prompt_sums, qualifying_positions, score_random_sequences, HeadScoreTable, RandomSequenceConfig};
use speech_icl::model::{AttentionRecord, ModelConfig, Parameters};
use speech_icl::vocab::Modality;

fn main() -> speech_icl::error::Result<()> {
    // Four distinct tokens repeated: head 0 attends to the token after the
    // previous occurrence, head 1 to itself.
    let tokens: Vec<u32> = [10, 11, 12, 13].repeat(3);
    let modality = vec![Modality::Speech; tokens.len()];
    let mut att = AttentionRecord::zeros(1, 2, tokens.len());
    for q in 0..tokens.len() {
        att.set(0, 1, q, q, 1.0);
        if q >= 4 {
            att.set(0, 0, q, q - 3, 1.0);
        } else {
            att.set(0, 0, q, 0, 1.0);
        }
    }
    for p in qualifying_positions(&tokens, &modality).iter().take(3) {
        println!("query {} has prefix key {}", p.query, p.prefix_key());
    }
    let sums = prompt_sums(&att, &tokens, &modality, &mut ChaCha8Rng::seed_from_u64(0));
    let table = HeadScoreTable::from_prompt_sums(1, 2, &[sums]);
    println!("speech prefix scores: {:?}", table.speech.prefix);
    println!("speech non-prefix scores: {:?}\n", table.speech.nonprefix);

    let lex = generate_lexicon(0, LexiconSizes::default())?;
    let vocab = lex.vocabulary();
    let config = ModelConfig { n_layers: 2, n_heads: 4, d_model: 32, d_ff: 64, max_context: 200, vocab_size: vocab.size(), seed: 0 };
    let params = Parameters::<f32>::init(&config)?;
    let freqs = vec![1; vocab.size()];
    let rc = RandomSequenceConfig { sequences: 5, ..Default::default() };
    let random = score_random_sequences(&params, &vocab, &freqs, &rc)?;
    println!("untrained model, random-sequence prefix scores:");
    for h in random.heads() {
        println!("  {h}: {:.4}", random.pooled.prefix[h.layer * random.n_heads + h.head]);
    }
    Ok(())
}
