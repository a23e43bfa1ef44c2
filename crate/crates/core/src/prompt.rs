//! Interleaved text/speech prompt serialization and the oracle speech decoder.
//!
//! A prompt is a run of blocks
//!
//! ```text
//! [TEXT] the boy judged the adult 'stop' [SPEECH] <units...> <speech:STOP>
//! ```
//!
//! one per demonstration, followed by an open block for the target that ends
//! right after `[SPEECH]`, where generation starts.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{render_speech, IclItem, Lexicon, Rate, Sentence};
use crate::error::{Error, Result};
use crate::model::TokenId;
use crate::vocab::{Modality, Vocabulary, SPEECH_MARK, TEXT_MARK, TEXT_STOP};

/// Token spans of one block. `speech` is `None` for the trailing open block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub text: Range<usize>,
    pub speech: Option<Range<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclPrompt {
    pub tokens: Vec<TokenId>,
    pub modality: Vec<Modality>,
    pub blocks: Vec<Block>,
    pub target_text: Range<usize>,
    pub voice: usize,
}

impl IclPrompt {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Speech tokens of `sentence` in `voice` at `rate`, without the stop marker.
pub fn speech_tokens(lexicon: &Lexicon, vocab: &Vocabulary, sentence: &Sentence, rate: Rate, voice: usize) -> Result<Vec<TokenId>> {
    Ok(render_speech(lexicon, sentence, rate)?
        .into_iter()
        .map(|u| vocab.speech_token(voice, u))
        .collect())
}

fn push_text(tokens: &mut Vec<TokenId>, vocab: &Vocabulary, sentence: &Sentence) -> Result<Range<usize>> {
    tokens.push(TEXT_MARK);
    let start = tokens.len();
    for w in &sentence.words {
        tokens.push(vocab.word_token(w)?);
    }
    let text = start..tokens.len();
    tokens.push(TEXT_STOP);
    tokens.push(SPEECH_MARK);
    Ok(text)
}

/// Serialize `item` as demonstration blocks plus the open target block.
pub fn build_prompt(item: &IclItem, lexicon: &Lexicon, vocab: &Vocabulary, max_context: usize) -> Result<IclPrompt> {
    let mut tokens = Vec::new();
    let mut blocks = Vec::new();
    for (demo, &rate) in item.demonstrations.iter().zip(&item.demo_rates) {
        let text = push_text(&mut tokens, vocab, demo)?;
        let start = tokens.len();
        tokens.extend(speech_tokens(lexicon, vocab, demo, rate, item.voice)?);
        blocks.push(Block {
            text,
            speech: Some(start..tokens.len()),
        });
        tokens.extend(vocab.stop_sequence(item.voice));
    }
    let target_text = push_text(&mut tokens, vocab, &item.target)?;
    blocks.push(Block {
        text: target_text.clone(),
        speech: None,
    });
    // room for at least one generated token
    if tokens.len() + 1 > max_context {
        return Err(Error::PromptTooLong {
            len: tokens.len(),
            max: max_context,
        });
    }
    let modality = tokens.iter().map(|&t| vocab.modality(t)).collect();
    Ok(IclPrompt {
        tokens,
        modality,
        blocks,
        target_text,
        voice: item.voice,
    })
}

/// Expected continuation for the target: its speech at the item's rate, then the stop marker.
pub fn target_continuation(item: &IclItem, lexicon: &Lexicon, vocab: &Vocabulary) -> Result<Vec<TokenId>> {
    let mut out = speech_tokens(lexicon, vocab, &item.target, item.rate(), item.voice)?;
    out.extend(vocab.stop_sequence(item.voice));
    Ok(out)
}

/// Recover block spans from a token sequence in the prompt format.
pub fn parse_blocks(tokens: &[TokenId], vocab: &Vocabulary, voice: usize) -> Result<Vec<Block>> {
    let bad = |pos: usize, m: &str| Error::MalformedPrompt(format!("{m} at position {pos}"));
    let stop = vocab.stop_sequence(voice);
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i] != TEXT_MARK {
            return Err(bad(i, "expected [TEXT]"));
        }
        i += 1;
        let start = i;
        while i < tokens.len() && vocab.modality(tokens[i]) == Modality::Text {
            i += 1;
        }
        let text = start..i;
        if tokens.get(i) != Some(&TEXT_STOP) || tokens.get(i + 1) != Some(&SPEECH_MARK) {
            return Err(bad(i, "expected 'stop' [SPEECH]"));
        }
        i += 2;
        if i == tokens.len() {
            blocks.push(Block { text, speech: None });
            break;
        }
        let start = i;
        while i < tokens.len() && !tokens[i..].starts_with(&stop) {
            if vocab.modality(tokens[i]) != Modality::Speech {
                return Err(bad(i, "non-speech token inside speech span"));
            }
            i += 1;
        }
        if i == tokens.len() {
            return Err(bad(i, "speech span without stop marker"));
        }
        blocks.push(Block {
            text,
            speech: Some(start..i),
        });
        i += stop.len();
    }
    match blocks.last() {
        Some(Block { speech: None, .. }) => Ok(blocks),
        _ => Err(bad(tokens.len(), "prompt must end with an open block")),
    }
}

/// One line per block, in the style of the printed prompt listing.
pub fn dump_prompt(prompt: &IclPrompt, vocab: &Vocabulary) -> String {
    let mut out = String::new();
    let names = |r: &Range<usize>| -> Vec<String> { prompt.tokens[r.clone()].iter().map(|&t| vocab.describe(t)).collect() };
    for b in &prompt.blocks {
        let _ = writeln!(out, "[TEXT] {} 'stop'", names(&b.text).join(" "));
        match &b.speech {
            Some(s) => {
                let _ = writeln!(out, "[SPEECH] {} <speech:STOP>", names(s).join(" "));
            }
            None => out.push_str("[SPEECH]\n"),
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedOutput {
    pub words: Vec<String>,
    /// Rate hypothesis that matched each word.
    pub rates: Vec<Rate>,
    pub unmatched: usize,
    pub stop_detected: bool,
    /// Speech tokens before the stop marker.
    pub units: usize,
}

/// Lookup tables from rendered token spans back to words, per voice and rate.
#[derive(Clone, Debug)]
pub struct Decoder {
    tables: Vec<HashMap<(Rate, Vec<TokenId>), String>>,
    stops: Vec<Vec<TokenId>>,
    span: HashMap<Rate, usize>,
    speech: Range<TokenId>,
}

/// Order in which rate hypotheses are tried at each position.
pub const DECODE_ORDER: [Rate; 3] = [Rate::Core, Rate::Slow, Rate::Fast];

impl Decoder {
    pub fn new(lexicon: &Lexicon, vocab: &Vocabulary) -> Self {
        let mut tables = Vec::new();
        let mut stops = Vec::new();
        for voice in 0..vocab.n_voices() {
            let mut t = HashMap::new();
            for (word, core) in &lexicon.renderings {
                for rate in Rate::ALL {
                    let toks = rate.apply(core).into_iter().map(|u| vocab.speech_token(voice, u)).collect();
                    t.insert((rate, toks), word.clone());
                }
            }
            tables.push(t);
            stops.push(vocab.stop_sequence(voice));
        }
        let e = crate::corpus::UNITS_PER_WORD;
        let span = Rate::ALL.iter().map(|&r| (r, r.units_per_word(e))).collect();
        Self {
            tables,
            stops,
            span,
            speech: vocab.speech_range(),
        }
    }

    /// Greedy segmentation of `generated` in `voice`, trying the allowed
    /// rates in [`DECODE_ORDER`]. Everything from the first stop marker on is dropped.
    pub fn decode(&self, generated: &[TokenId], voice: usize, rates: &[Rate]) -> DecodedOutput {
        let stop = &self.stops[voice];
        let end = generated
            .windows(stop.len())
            .position(|w| w == stop.as_slice())
            .unwrap_or(generated.len());
        let stream = &generated[..end];
        let mut out = DecodedOutput {
            stop_detected: end < generated.len(),
            units: stream.iter().filter(|t| self.speech.contains(t)).count(),
            ..Default::default()
        };
        let order: Vec<Rate> = DECODE_ORDER.into_iter().filter(|r| rates.contains(r)).collect();
        let table = &self.tables[voice];
        let mut i = 0;
        let mut in_unmatched = false;
        while i < stream.len() {
            let hit = order.iter().find_map(|&r| {
                let n = self.span[&r];
                stream
                    .get(i..i + n)
                    .and_then(|s| table.get(&(r, s.to_vec())))
                    .map(|w| (r, n, w))
            });
            match hit {
                Some((r, n, w)) => {
                    out.words.push(w.clone());
                    out.rates.push(r);
                    i += n;
                    in_unmatched = false;
                }
                None => {
                    if !in_unmatched {
                        out.unmatched += 1;
                    }
                    in_unmatched = true;
                    i += 1;
                }
            }
        }
        out
    }
}

/// One-shot decode; build a [`Decoder`] instead when decoding many outputs.
pub fn decode_output(generated: &[TokenId], lexicon: &Lexicon, vocab: &Vocabulary, voice: usize, rates: &[Rate]) -> DecodedOutput {
    Decoder::new(lexicon, vocab).decode(generated, voice, rates)
}

/// Speech tokens per decoded word, the token-domain stand-in for duration per word.
pub fn measure_output_rate(decoded: &DecodedOutput) -> Result<f64> {
    if decoded.words.is_empty() {
        return Err(Error::NoDecodedWords);
    }
    Ok(decoded.units as f64 / decoded.words.len() as f64)
}
