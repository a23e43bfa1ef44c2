//! Word error rate, content word recall and bootstrap intervals.
//!
//! cargo run --release --example metrics

use speech_icl::corpus::{generate_lexicon, make_item, Condition, LexiconSizes, SyntaxCombo};
use speech_icl::metrics::{bootstrap_mean, cleanup, content_word_recall, wer, BOOTSTRAP_RESAMPLES};

fn main() -> speech_icl::error::Result<()> {
    let reference = ["a", "secretary", "forgets", "a", "cousin"];
    for hyp in [&reference[..], &["the", "secretary", "forgot", "the", "cousin"], &[]] {
        println!("WER {:.2}  {:?}", wer(&reference, hyp)?, hyp);
    }
    println!("cleanup: {:?}", cleanup(&["The", "BOY,", "stop"]));

    let lex = generate_lexicon(0, LexiconSizes::default())?;
    let target = make_item(&lex, Condition::Core, SyntaxCombo::ALL[0], 0, 1)?.target;
    let mut hyp = target.words.clone();
    println!("\ntarget: {target}");
    println!("recall of exact copy: {:.3}", content_word_recall(&target, &hyp, &lex)?);
    hyp.retain(|w| *w != target.patient);
    println!("recall without the patient: {:.3}", content_word_recall(&target, &hyp, &lex)?);

    let values = [0.2, 0.4, 0.0, 0.6, 0.2, 0.2, 0.8, 0.4];
    let e = bootstrap_mean(&values, BOOTSTRAP_RESAMPLES, 0)?;
    println!("\nmean {:.3}, 95% CI [{:.3}, {:.3}] over {} values", e.mean, e.lo, e.hi, e.n);
    Ok(())
}
