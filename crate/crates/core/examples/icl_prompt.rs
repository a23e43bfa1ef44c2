//! Serialize an item into the interleaved prompt format and decode the
//! reference continuation back to words.
//!
//! cargo run --release --example icl_prompt

use speech_icl::corpus::{generate_lexicon, make_item, Condition, LexiconSizes, Rate, SyntaxCombo};
use speech_icl::prompt::{build_prompt, dump_prompt, measure_output_rate, target_continuation, Decoder};

fn main() -> speech_icl::error::Result<()> {
    let lex = generate_lexicon(3, LexiconSizes::default())?;
    let vocab = lex.vocabulary();
    let item = make_item(&lex, Condition::RateSlow, SyntaxCombo::ALL[2], 2, 11)?;
    let prompt = build_prompt(&item, &lex, &vocab, 512)?;
    println!("{} tokens, vocabulary of {}", prompt.len(), vocab.size());
    print!("{}", dump_prompt(&prompt, &vocab));

    let gold = target_continuation(&item, &lex, &vocab)?;
    let decoded = Decoder::new(&lex, &vocab).decode(&gold, item.voice, &Rate::ALL);
    println!("\nreference continuation: {} tokens", gold.len());
    println!("decoded: {:?}", decoded.words);
    println!("stop detected: {}, units per word: {}", decoded.stop_detected, measure_output_rate(&decoded)?);
    Ok(())
}
