//! One item per experimental condition, shown as text, plus the rate
//! renderings of a single sentence.
//!
//! cargo run --release --example corpus_conditions

use speech_icl::corpus::{adjacent_repeats, generate_lexicon, make_item, render_speech, Condition, LexiconSizes, Rate, SyntaxCombo};

fn main() -> speech_icl::error::Result<()> {
    let lex = generate_lexicon(0, LexiconSizes::default())?;
    for (i, cond) in Condition::all().into_iter().enumerate() {
        let n = *cond.demo_range().end().min(&2);
        let item = make_item(&lex, cond, SyntaxCombo::ALL[i % 4], n, i as u64)?;
        println!("{cond} ({}), voice {}", item.combo, item.voice);
        for (d, r) in item.demonstrations.iter().zip(&item.demo_rates) {
            println!("  demo   [{r}] {d}");
        }
        println!("  target [{}] {}", item.rate(), item.target);
    }

    let s = make_item(&lex, Condition::Core, SyntaxCombo::ALL[0], 0, 7)?.target;
    println!("\n{s}");
    for rate in Rate::ALL {
        let units = render_speech(&lex, &s, rate)?;
        println!("  {rate:<5} {:>3} units, {:>3} adjacent repeats", units.len(), adjacent_repeats(&units));
    }
    Ok(())
}
