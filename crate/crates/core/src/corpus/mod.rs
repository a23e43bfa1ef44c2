//! Seeded synthetic corpus: a small lexicon with per-word speech renderings,
//! transitive sentences, demonstration/target items under controlled overlap
//! and rate conditions, and the training mixture.

mod build;
mod item;
mod lexicon;
mod sentence;

pub use build::{
    build_corpus, read_corpus, write_corpus, Corpus, CorpusSpec, EvalItem, SequenceKind, TrainRecord, EVAL_FILE,
    LEXICON_FILE, SPEC_FILE, TRAIN_FILE,
};
pub use item::{
    make_item, make_item_for_target, random_sentence, Condition, IclItem, OverlapDegree, Rate, SyntaxCombo, MAX_DEMOS,
};
pub use lexicon::{
    generate_lexicon, Lexicon, LexiconSizes, Verb, AUX_PAST, AUX_PRESENT, BY, DEFINITE, FUNCTION_WORDS, INDEFINITE,
    UNITS_PER_VOICE, UNITS_PER_WORD,
};
pub use sentence::{Determiner, Sentence, Syntax, Tense};

use crate::error::Result;

/// Canonical speech units of `sentence` at `rate`.
pub fn render_speech(lexicon: &Lexicon, sentence: &Sentence, rate: Rate) -> Result<Vec<u16>> {
    let mut out = Vec::with_capacity(sentence.words.len() * rate.units_per_word(UNITS_PER_WORD));
    for w in &sentence.words {
        out.extend(rate.apply(lexicon.rendering(w)?));
    }
    Ok(out)
}

/// Adjacent equal pairs, the repetitions a slow rendering adds.
pub fn adjacent_repeats<T: PartialEq>(units: &[T]) -> usize {
    units.windows(2).filter(|w| w[0] == w[1]).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_word_lengths() {
        let lex = generate_lexicon(0, LexiconSizes::default()).unwrap();
        let s = Sentence::new(&lex, Syntax::Active, Tense::Present, Determiner::Definite, &lex.nouns[0], &lex.verbs[0].lemma, &lex.nouns[1]).unwrap();
        let len = |r| render_speech(&lex, &s, r).unwrap().len();
        assert_eq!((len(Rate::Core), len(Rate::Fast), len(Rate::Slow)), (20, 10, 40));
        let core = render_speech(&lex, &s, Rate::Core).unwrap();
        let slow = render_speech(&lex, &s, Rate::Slow).unwrap();
        assert!(adjacent_repeats(&slow) >= adjacent_repeats(&core) + core.len());
    }
}
