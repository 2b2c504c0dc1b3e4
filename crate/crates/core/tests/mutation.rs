use std::collections::BTreeMap;

use driftlab::mutate::{apply_repair, extract_real_bug, inject, inject_at, rewrite_pairs};
use driftlab::rng::{rng_for, STREAM_INJECT};
use driftlab::syntax::{
    analyze, candidates_for, function_units, lex, operator_set, vocab_index, BugKind, CandidateMap, Token, TokenKind,
    TokenStream, BINOP_VOCAB,
};
use driftlab::toy::{template_count, template_function};
use proptest::prelude::*;

fn function(template: usize, seed: u64) -> TokenStream {
    let text = template_function(template, 0.5, &mut rng_for(seed, 0));
    let ts = lex(&text).unwrap();
    function_units(&ts).remove(0).tokens
}

fn kind_strategy() -> impl Strategy<Value = BugKind> {
    prop::sample::select(BugKind::ALL.to_vec())
}

fn texts(ts: &[Token]) -> Vec<&str> {
    ts.iter().map(|t| t.text.as_str()).collect()
}

fn swapped(ts: &[Token], a: &std::ops::Range<usize>, b: &std::ops::Range<usize>) -> Vec<String> {
    let (a, b) = if a.start < b.start { (a, b) } else { (b, a) };
    let mut out: Vec<String> = ts[..a.start].iter().map(|t| t.text.clone()).collect();
    out.extend(ts[b.clone()].iter().map(|t| t.text.clone()));
    out.extend(ts[a.end..b.start].iter().map(|t| t.text.clone()));
    out.extend(ts[a.clone()].iter().map(|t| t.text.clone()));
    out.extend(ts[b.end..].iter().map(|t| t.text.clone()));
    out
}

fn eligible(template: usize, seed: u64, kind: BugKind) -> Option<(TokenStream, CandidateMap)> {
    let ts = function(template, seed);
    let c = candidates_for(&ts, kind).ok()?;
    (!rewrite_pairs(&ts, &c).is_empty()).then_some((ts, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn var_misuse_locations_have_an_earlier_other_variable(t in 0..template_count(), seed in any::<u64>()) {
        let ts = function(t, seed);
        let c = candidates_for(&ts, BugKind::VarMisuse).unwrap();
        for &l in &c.loc {
            prop_assert_eq!(ts[l].kind, TokenKind::Identifier);
            let reps = &c.rep_of[&l];
            prop_assert!(reps.iter().any(|&r| r < l && ts[r].text != ts[l].text), "loc {} in {:?}", l, texts(&ts));
        }
    }

    #[test]
    fn wrong_binop_repairs_are_the_rest_of_the_set(t in 0..template_count(), seed in any::<u64>()) {
        let ts = function(t, seed);
        let c = candidates_for(&ts, BugKind::WrongBinop).unwrap();
        for &l in &c.loc {
            let set = operator_set(&ts[l].text).unwrap();
            let reps = &c.rep_of[&l];
            let members = BINOP_VOCAB.iter().filter(|op| operator_set(op) == Some(set)).count();
            prop_assert_eq!(reps.len(), members - 1);
            prop_assert!([4, 9, 1].contains(&reps.len()));
            prop_assert!(!reps.contains(&vocab_index(&ts[l].text).unwrap()));
            prop_assert!(reps.iter().all(|&r| operator_set(BINOP_VOCAB[r]) == Some(set)));
        }
    }

    #[test]
    fn candidates_are_deterministic(t in 0..template_count(), seed in any::<u64>(), kind in kind_strategy()) {
        let a = function(t, seed);
        let b = function(t, seed);
        prop_assert_eq!(candidates_for(&a, kind).unwrap(), candidates_for(&b, kind).unwrap());
        prop_assert_eq!(analyze(&a).unwrap(), analyze(&b).unwrap());
    }

    #[test]
    fn arg_swap_candidates_are_symmetric(t in 0..template_count(), seed in any::<u64>()) {
        let ts = function(t, seed);
        let c = candidates_for(&ts, BugKind::ArgSwap).unwrap();
        for (&a, reps) in &c.rep_of {
            for &b in reps {
                prop_assert!(c.rep_of.get(&b).is_some_and(|r| r.contains(&a)), "{} lists {} but not back", a, b);
            }
        }
    }

    #[test]
    fn injected_bugs_round_trip(t in 0..template_count(), seed in any::<u64>(), kind in kind_strategy(), draw in any::<u64>()) {
        let Some((clean, c)) = eligible(t, seed, kind) else { return Ok(()) };
        let (buggy, edit) = inject(&clean, &c, &mut rng_for(draw, STREAM_INJECT)).unwrap();
        let mined = extract_real_bug(&buggy, &clean, kind).expect("injected bug is mined");
        prop_assert_eq!(&mined.edit, &edit);
        prop_assert!(mined.buggy_tokens.same_text(&buggy));
        prop_assert!(apply_repair(&buggy, &edit).unwrap().same_text(&clean));
    }

    #[test]
    fn inverse_edits_compose_to_identity(t in 0..template_count(), seed in any::<u64>(), kind in kind_strategy(), draw in any::<u64>()) {
        let Some((clean, c)) = eligible(t, seed, kind) else { return Ok(()) };
        let (buggy, edit) = inject(&clean, &c, &mut rng_for(draw, STREAM_INJECT)).unwrap();
        let fixed = apply_repair(&buggy, &edit).unwrap();
        let inverse = edit.inverse(&fixed).unwrap();
        prop_assert!(apply_repair(&fixed, &inverse).unwrap().same_text(&buggy));
    }

    #[test]
    fn injection_stays_inside_the_candidate_map(t in 0..template_count(), seed in any::<u64>(), kind in kind_strategy(), draw in any::<u64>()) {
        let Some((clean, c)) = eligible(t, seed, kind) else { return Ok(()) };
        let (buggy, _) = inject(&clean, &c, &mut rng_for(draw, STREAM_INJECT)).unwrap();
        let diff: Vec<usize> = (0..clean.len()).filter(|&i| clean[i].text != buggy[i].text).collect();
        match kind {
            BugKind::VarMisuse => {
                prop_assert_eq!(diff.len(), 1);
                let l = diff[0];
                prop_assert!(c.contains_loc(l));
                prop_assert!(c.rep_of[&l].iter().any(|&r| clean[r].text == buggy[l].text));
            }
            BugKind::WrongBinop => {
                prop_assert_eq!(diff.len(), 1);
                let l = diff[0];
                prop_assert!(c.contains_loc(l));
                prop_assert!(c.rep_of[&l].contains(&vocab_index(&buggy[l].text).unwrap()));
            }
            BugKind::ArgSwap => {
                let buggy_texts: Vec<String> = buggy.iter().map(|t| t.text.clone()).collect();
                let explained = c.loc.iter().any(|a| {
                    c.rep_of[a].iter().any(|b| swapped(&clean, &c.arg_ranges[a], &c.arg_ranges[b]) == buggy_texts)
                });
                prop_assert!(explained);
            }
        }
    }
}

const UNIFORM_SOURCE: &str = "def f(a, b, c):\n    d = a + b\n    e = g(a, d, c)\n    return d * e < c\n";

/// Pairs that produce the same program (an arg-swap listed from either
/// argument) are indistinguishable, so frequencies are compared per output.
#[test]
fn injection_is_uniform_over_pairs() {
    const N: usize = 10_000;
    for kind in BugKind::ALL {
        let clean = function_units(&lex(UNIFORM_SOURCE).unwrap()).remove(0).tokens;
        let c = candidates_for(&clean, kind).unwrap();
        let pairs = rewrite_pairs(&clean, &c);
        assert!(pairs.len() >= 4, "{kind}: {} pairs", pairs.len());
        let mut expected: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for &(l, r) in &pairs {
            let out = inject_at(&clean, &c, l, r).unwrap().0;
            *expected.entry(out.iter().map(|t| t.text.clone()).collect()).or_default() += 1;
        }
        let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        let mut rng = rng_for(0, STREAM_INJECT);
        for _ in 0..N {
            let (buggy, _) = inject(&clean, &c, &mut rng).unwrap();
            let key: Vec<String> = buggy.iter().map(|t| t.text.clone()).collect();
            assert!(expected.contains_key(&key), "{kind}: injection outside the pairs");
            *counts.entry(key).or_default() += 1;
        }
        for (out, &size) in &expected {
            let p = size as f64 / pairs.len() as f64;
            let bound = 3.0 * (p * (1.0 - p) / N as f64).sqrt();
            let freq = counts.get(out).copied().unwrap_or(0) as f64 / N as f64;
            assert!((freq - p).abs() < bound, "{kind}: {freq} vs {p} (bound {bound})");
        }
    }
}
