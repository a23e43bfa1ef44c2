use std::collections::BTreeSet;

use proptest::prelude::*;
use speech_icl::corpus::*;
use speech_icl::prompt::*;
use speech_icl::vocab::Modality;

fn lexicon(seed: u64) -> Lexicon {
    generate_lexicon(seed, LexiconSizes::default()).unwrap()
}

/// Words of `a` that also occur in `b`, as lemmas for content words and as
/// themselves otherwise. "by" is structural to the passive and ignored.
fn shared(lex: &Lexicon, a: &Sentence, b: &Sentence) -> BTreeSet<String> {
    let key = |w: &String| lex.lemma(w).map(String::from).unwrap_or_else(|| w.clone());
    let bs: BTreeSet<String> = b.words.iter().map(key).collect();
    a.words.iter().map(key).filter(|w| w != "by" && bs.contains(w)).collect()
}

fn surface_shared(a: &Sentence, b: &Sentence) -> BTreeSet<String> {
    a.words.iter().filter(|w| *w != "by" && b.words.contains(w)).cloned().collect()
}

fn combos() -> impl Strategy<Value = SyntaxCombo> {
    prop::sample::select(SyntaxCombo::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn core_demos_share_no_words_and_differ_in_tense(seed in 0u64..4, item_seed in any::<u64>(), combo in combos(), n in 1usize..=5) {
        let lex = lexicon(seed);
        let item = make_item(&lex, Condition::Core, combo, n, item_seed).unwrap();
        prop_assert_eq!(item.n_demos(), n);
        for d in &item.demonstrations {
            prop_assert!(surface_shared(d, &item.target).is_empty(), "{} / {}", d, item.target);
            prop_assert!(shared(&lex, d, &item.target).is_empty());
            prop_assert_ne!(d.tense, item.target.tense);
        }
    }

    #[test]
    fn overlap_degree_is_exact(seed in 0u64..4, item_seed in any::<u64>(), combo in combos()) {
        let lex = lexicon(seed);
        for degree in OverlapDegree::ALL {
            let item = make_item(&lex, Condition::LexicalOverlap(degree), combo, 1, item_seed).unwrap();
            let (d, t) = (&item.demonstrations[0], &item.target);
            let got = shared(&lex, d, t);
            let nouns: BTreeSet<String> = [t.agent.clone(), t.patient.clone()].into();
            let det: BTreeSet<String> = [t.determiner.word().to_string()].into();
            let content: BTreeSet<String> = nouns.iter().cloned().chain([t.verb.clone()]).collect();
            let aux_shared = got.iter().filter(|w| *w == "is" || *w == "was").count();
            let function: BTreeSet<String> = got.iter().filter(|w| lex.lemma(w).is_none()).cloned().collect();
            match degree {
                OverlapDegree::NounsOnly => prop_assert_eq!(&got, &nouns),
                OverlapDegree::VerbOnly => prop_assert_eq!(&got, &[t.verb.clone()].into()),
                OverlapDegree::FunctionOnly => {
                    prop_assert!(got.iter().all(|w| lex.lemma(w).is_none()), "{:?}", got);
                    prop_assert!(function.is_superset(&det));
                    prop_assert_eq!(d.tense, t.tense);
                }
                OverlapDegree::AllWords => {
                    prop_assert!(got.is_superset(&content) && got.is_superset(&det), "{:?}", got);
                    prop_assert_eq!(d.tense, t.tense);
                }
            }
            if matches!(degree, OverlapDegree::NounsOnly | OverlapDegree::VerbOnly) {
                prop_assert_eq!(aux_shared, 0);
                prop_assert_ne!(d.tense, t.tense);
            }
        }
    }

    #[test]
    fn semantic_demos_use_synonyms_without_surface_overlap(item_seed in any::<u64>(), combo in combos()) {
        let lex = lexicon(0);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(item_seed);
        let target = random_sentence(&lex, combo.target(), true, &mut rng).unwrap();
        for degree in [OverlapDegree::NounsOnly, OverlapDegree::VerbOnly] {
            let item = make_item_for_target(&lex, Condition::SemanticSimilarity(degree), combo, &target, 1, item_seed).unwrap();
            let d = &item.demonstrations[0];
            prop_assert!(surface_shared(d, &target).is_empty(), "{} / {}", d, target);
            match degree {
                OverlapDegree::NounsOnly => {
                    let want: BTreeSet<&str> = [lex.noun_synonym(&target.agent).unwrap(), lex.noun_synonym(&target.patient).unwrap()].into();
                    let got: BTreeSet<&str> = [d.agent.as_str(), d.patient.as_str()].into();
                    prop_assert_eq!(got, want);
                }
                _ => prop_assert_eq!(Some(d.verb.as_str()), lex.verb_synonym(&target.verb)),
            }
        }
    }

    #[test]
    fn rate_lengths_and_repeats(seed in 0u64..4, s_seed in any::<u64>(), passive in any::<bool>()) {
        let lex = lexicon(seed);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(s_seed);
        let syntax = if passive { Syntax::Passive } else { Syntax::Active };
        let s = random_sentence(&lex, syntax, false, &mut rng).unwrap();
        let core = render_speech(&lex, &s, Rate::Core).unwrap();
        let fast = render_speech(&lex, &s, Rate::Fast).unwrap();
        let slow = render_speech(&lex, &s, Rate::Slow).unwrap();
        prop_assert_eq!(core.len(), UNITS_PER_WORD * s.words.len());
        prop_assert_eq!(2 * fast.len(), core.len());
        prop_assert_eq!(slow.len(), 2 * core.len());
        prop_assert!(adjacent_repeats(&slow) >= core.len());
        prop_assert!(adjacent_repeats(&slow) >= 2 * adjacent_repeats(&core));
    }

    #[test]
    fn decoding_inverts_rendering(seed in 0u64..4, s_seed in any::<u64>(), voice in 0usize..2) {
        let lex = lexicon(seed);
        let vocab = lex.vocabulary();
        let dec = Decoder::new(&lex, &vocab);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(s_seed);
        let s = random_sentence(&lex, Syntax::Passive, false, &mut rng).unwrap();
        for rate in Rate::ALL {
            let mut toks = speech_tokens(&lex, &vocab, &s, rate, voice).unwrap();
            toks.extend(vocab.stop_sequence(voice));
            let out = dec.decode(&toks, voice, &Rate::ALL);
            prop_assert_eq!(&out.words, &s.words);
            prop_assert_eq!(out.unmatched, 0);
            prop_assert!(out.stop_detected);
            prop_assert!(out.rates.iter().all(|&r| r == rate));
        }
    }

    #[test]
    fn prompt_structure_round_trips(seed in 0u64..4, item_seed in any::<u64>(), combo in combos(), n in 0usize..=5, fast in any::<bool>()) {
        let lex = lexicon(seed);
        let vocab = lex.vocabulary();
        let cond = if fast { Condition::RateFast } else { Condition::Core };
        let item = make_item(&lex, cond, combo, n, item_seed).unwrap();
        let p = build_prompt(&item, &lex, &vocab, 4096).unwrap();
        prop_assert_eq!(p.blocks.len(), n + 1);
        prop_assert_eq!(parse_blocks(&p.tokens, &vocab, item.voice).unwrap(), p.blocks.clone());
        prop_assert_eq!(*p.tokens.last().unwrap(), speech_icl::vocab::SPEECH_MARK);
        let speech = p.modality.iter().filter(|&&m| m == Modality::Speech).count();
        let want: usize = item.demonstrations.iter().zip(&item.demo_rates)
            .map(|(d, r)| render_speech(&lex, d, *r).unwrap().len() + speech_icl::vocab::STOP_UNITS.len())
            .sum();
        prop_assert_eq!(speech, want);
        for (t, m) in p.tokens.iter().zip(&p.modality) {
            prop_assert_eq!(vocab.modality(*t), *m);
        }
    }
}

#[test]
fn every_word_decodes_at_every_rate_and_voice() {
    for seed in 0..3 {
        let lex = lexicon(seed);
        let vocab = lex.vocabulary();
        let dec = Decoder::new(&lex, &vocab);
        for word in lex.surface_forms() {
            for voice in 0..vocab.n_voices() {
                for rate in Rate::ALL {
                    let units = rate.apply(lex.rendering(&word).unwrap());
                    let toks: Vec<u32> = units.iter().map(|&u| vocab.speech_token(voice, u)).collect();
                    let out = dec.decode(&toks, voice, &Rate::ALL);
                    assert_eq!(out.words, vec![word.clone()], "{word} {rate} v{voice}");
                    assert!(!out.stop_detected);
                }
            }
        }
    }
}

#[test]
fn output_rate_by_construction() {
    let lex = lexicon(0);
    let vocab = lex.vocabulary();
    let dec = Decoder::new(&lex, &vocab);
    let s = make_item(&lex, Condition::Core, SyntaxCombo::ALL[0], 0, 1).unwrap().target;
    let rate_of = |toks: Vec<u32>| measure_output_rate(&dec.decode(&toks, 0, &Rate::ALL)).unwrap();
    assert_eq!(rate_of(speech_tokens(&lex, &vocab, &s, Rate::Core, 0).unwrap()), 4.0);
    assert_eq!(rate_of(speech_tokens(&lex, &vocab, &s, Rate::Slow, 0).unwrap()), 8.0);
    // first word slow, the rest fast
    let mut mixed = Vec::new();
    for (i, w) in s.words.iter().enumerate() {
        let r = if i == 0 { Rate::Slow } else { Rate::Fast };
        mixed.extend(r.apply(lex.rendering(w).unwrap()).iter().map(|&u| vocab.speech_token(0, u)));
    }
    let want = (8 + 2 * (s.words.len() - 1)) as f64 / s.words.len() as f64;
    let got = rate_of(mixed);
    assert!(got > 2.0 && got < 8.0);
    assert_eq!(got, want);
    assert!(measure_output_rate(&dec.decode(&[], 0, &Rate::ALL)).is_err());
}

#[test]
fn eval_grid_has_zero_shot_items_and_all_combos() {
    let lex = lexicon(0);
    let spec = CorpusSpec {
        eval_targets: 3,
        demo_sets: 2,
        train_sequences: 50,
        ..Default::default()
    };
    let corpus = build_corpus(&lex, &spec).unwrap();
    for cond in Condition::all() {
        let items: Vec<_> = corpus.eval_for(cond).collect();
        let combos: BTreeSet<String> = items.iter().map(|e| e.item.combo.to_string()).collect();
        assert_eq!(combos.len(), 4, "{cond}");
        assert_eq!(items.iter().any(|e| e.n_demos == 0), !cond.is_overlap(), "{cond}");
        for e in items {
            e.item.validate(&lex).unwrap();
        }
    }
}
