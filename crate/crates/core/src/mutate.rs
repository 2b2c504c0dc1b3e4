//! Synthetic bug injection, repair application and real-bug mining by
//! aligning two versions of a function against the same rewrite rules.

use std::ops::Range;

use rand::Rng;
use thiserror::Error;

use crate::syntax::{
    candidates_for, operator_kind, vocab_index, BugKind, CandidateMap, Token, TokenStream, BINOP_VOCAB,
};

/// What a bug location should be repaired with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Repair {
    /// Token index in the same stream: a definition of the correct variable
    /// (var-misuse) or the first token of the argument to swap with (arg-swap).
    Token(usize),
    /// Index into [`BINOP_VOCAB`].
    Operator(usize),
}

/// A single rewrite. Applying it to the stream it was produced for yields the
/// other version of the function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugEdit {
    pub kind: BugKind,
    pub loc_index: usize,
    pub repair: Repair,
    /// Text at `loc_index` in the stream the edit applies to.
    pub original_text: String,
    /// arg-swap: the two argument token ranges, in stream order.
    pub swapped_span_pair: Option<(Range<usize>, Range<usize>)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub repo: String,
    pub file: String,
    pub commit: String,
}

/// A mined bug: the buggy version plus the edit that fixes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealBug {
    pub buggy_tokens: TokenStream,
    pub edit: BugEdit,
    pub provenance: Provenance,
}

impl RealBug {
    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InjectError {
    #[error("no applicable rewrite for {0}")]
    NoCandidates(BugKind),
    #[error("location {0} is not a candidate")]
    NotACandidate(usize),
    #[error("repair {0:?} is not a candidate for its location")]
    InvalidRepair(Repair),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("index {index} out of range for stream of {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("expected {expected:?} at token {index}, found {found:?}")]
    TextMismatch { index: usize, expected: String, found: String },
    #[error("edit is malformed for {0}")]
    Malformed(BugKind),
}

/// Every concrete rewrite the candidate map allows, as (location, repair)
/// pairs.
///
/// var-misuse pairs name a variable once per location (its first definition
/// token), and only variables already defined before the location qualify, so
/// the rewritten use is itself a candidate in the buggy version.
pub fn rewrite_pairs(tokens: &[Token], candidates: &CandidateMap) -> Vec<(usize, Repair)> {
    let mut pairs = Vec::new();
    for &l in &candidates.loc {
        let reps = &candidates.rep_of[&l];
        match candidates.kind {
            BugKind::VarMisuse => {
                let mut seen: Vec<&str> = Vec::new();
                for &r in reps {
                    let name = tokens[r].text.as_str();
                    if seen.contains(&name) {
                        continue;
                    }
                    seen.push(name);
                    if r < l {
                        pairs.push((l, Repair::Token(r)));
                    }
                }
            }
            BugKind::WrongBinop => pairs.extend(reps.iter().map(|&op| (l, Repair::Operator(op)))),
            BugKind::ArgSwap => pairs.extend(reps.iter().map(|&r| (l, Repair::Token(r)))),
        }
    }
    pairs
}

/// Injects one bug drawn uniformly over [`rewrite_pairs`]. Returns the buggy
/// stream and the edit that restores `tokens` from it.
pub fn inject<R: Rng + ?Sized>(
    tokens: &TokenStream,
    candidates: &CandidateMap,
    rng: &mut R,
) -> Result<(TokenStream, BugEdit), InjectError> {
    let pairs = rewrite_pairs(tokens, candidates);
    if pairs.is_empty() {
        return Err(InjectError::NoCandidates(candidates.kind));
    }
    let (l, r) = pairs[rng.gen_range(0..pairs.len())];
    inject_at(tokens, candidates, l, r)
}

/// Injects the bug given by a specific (location, rewrite) choice.
///
/// For var-misuse `rewrite` designates a definition of the wrong variable to
/// put at `loc`; for wrong-binop the wrong operator; for arg-swap the other
/// argument.
pub fn inject_at(
    tokens: &TokenStream,
    candidates: &CandidateMap,
    loc: usize,
    rewrite: Repair,
) -> Result<(TokenStream, BugEdit), InjectError> {
    let reps = candidates.rep_of.get(&loc).ok_or(InjectError::NotACandidate(loc))?;
    let mut out = tokens.tokens().to_vec();
    match (candidates.kind, rewrite) {
        (BugKind::VarMisuse, Repair::Token(r)) if reps.contains(&r) => {
            let correct_def = candidates.own_defs[&loc][0];
            let wrong = tokens[r].text.clone();
            out[loc].text = wrong.clone();
            let edit = BugEdit {
                kind: BugKind::VarMisuse,
                loc_index: loc,
                repair: Repair::Token(correct_def),
                original_text: wrong,
                swapped_span_pair: None,
            };
            Ok((TokenStream::from_tokens(out), edit))
        }
        (BugKind::WrongBinop, Repair::Operator(op)) if reps.contains(&op) => {
            let correct = vocab_index(&tokens[loc].text).ok_or(InjectError::NotACandidate(loc))?;
            let wrong = BINOP_VOCAB[op];
            out[loc].text = wrong.to_string();
            out[loc].kind = operator_kind(wrong);
            let edit = BugEdit {
                kind: BugKind::WrongBinop,
                loc_index: loc,
                repair: Repair::Operator(correct),
                original_text: wrong.to_string(),
                swapped_span_pair: None,
            };
            Ok((TokenStream::from_tokens(out), edit))
        }
        (BugKind::ArgSwap, Repair::Token(r)) if reps.contains(&r) => {
            let a = candidates.arg_ranges[&loc].clone();
            let b = candidates.arg_ranges[&r].clone();
            let (first, second) = if a.start < b.start { (a, b) } else { (b, a) };
            let swapped = swap_ranges(tokens.tokens(), &first, &second);
            let (nf, ns) = swapped_slots(&first, &second);
            let edit = BugEdit {
                kind: BugKind::ArgSwap,
                loc_index: nf.start,
                repair: Repair::Token(ns.start),
                original_text: swapped[nf.start].text.clone(),
                swapped_span_pair: Some((nf, ns)),
            };
            Ok((TokenStream::from_tokens(swapped), edit))
        }
        _ => Err(InjectError::InvalidRepair(rewrite)),
    }
}

/// Slots occupied by the two arguments after swapping `first` and `second`.
fn swapped_slots(first: &Range<usize>, second: &Range<usize>) -> (Range<usize>, Range<usize>) {
    let nf = first.start..first.start + second.len();
    let ns = second.end - first.len()..second.end;
    (nf, ns)
}

fn swap_ranges(tokens: &[Token], first: &Range<usize>, second: &Range<usize>) -> Vec<Token> {
    let mut out = Vec::with_capacity(tokens.len());
    out.extend_from_slice(&tokens[..first.start]);
    out.extend_from_slice(&tokens[second.clone()]);
    out.extend_from_slice(&tokens[first.end..second.start]);
    out.extend_from_slice(&tokens[first.clone()]);
    out.extend_from_slice(&tokens[second.end..]);
    out
}

/// Applies `edit` and renumbers token indices.
pub fn apply_repair(tokens: &TokenStream, edit: &BugEdit) -> Result<TokenStream, RepairError> {
    let len = tokens.len();
    let check = |index: usize| {
        if index < len {
            Ok(())
        } else {
            Err(RepairError::IndexOutOfRange { index, len })
        }
    };
    check(edit.loc_index)?;
    let at_loc = &tokens[edit.loc_index].text;
    if *at_loc != edit.original_text {
        return Err(RepairError::TextMismatch {
            index: edit.loc_index,
            expected: edit.original_text.clone(),
            found: at_loc.clone(),
        });
    }
    let mut out = tokens.tokens().to_vec();
    match (edit.kind, edit.repair) {
        (BugKind::VarMisuse, Repair::Token(r)) => {
            check(r)?;
            out[edit.loc_index].text = tokens[r].text.clone();
        }
        (BugKind::WrongBinop, Repair::Operator(op)) => {
            let text = BINOP_VOCAB.get(op).ok_or(RepairError::Malformed(edit.kind))?;
            out[edit.loc_index].text = text.to_string();
            out[edit.loc_index].kind = operator_kind(text);
        }
        (BugKind::ArgSwap, Repair::Token(r)) => {
            let (a, b) = edit.swapped_span_pair.clone().ok_or(RepairError::Malformed(edit.kind))?;
            check(r)?;
            if b.end > len {
                return Err(RepairError::IndexOutOfRange { index: b.end, len });
            }
            if a.is_empty() || b.is_empty() || a.end > b.start || a.start != edit.loc_index || b.start != r {
                return Err(RepairError::Malformed(edit.kind));
            }
            out = swap_ranges(tokens.tokens(), &a, &b);
        }
        _ => return Err(RepairError::Malformed(edit.kind)),
    }
    Ok(TokenStream::from_tokens(out))
}

impl BugEdit {
    /// The edit that undoes `self`, expressed against `repaired`, the stream
    /// obtained by applying `self`.
    pub fn inverse(&self, repaired: &TokenStream) -> Result<BugEdit, RepairError> {
        let loc = self.loc_index;
        if loc >= repaired.len() {
            return Err(RepairError::IndexOutOfRange { index: loc, len: repaired.len() });
        }
        match self.kind {
            BugKind::VarMisuse => {
                let cands = candidates_for(repaired, BugKind::VarMisuse).map_err(|_| RepairError::Malformed(self.kind))?;
                let def = cands
                    .rep_of
                    .get(&loc)
                    .and_then(|reps| reps.iter().copied().find(|&r| repaired[r].text == self.original_text))
                    .ok_or(RepairError::Malformed(self.kind))?;
                Ok(BugEdit {
                    kind: self.kind,
                    loc_index: loc,
                    repair: Repair::Token(def),
                    original_text: repaired[loc].text.clone(),
                    swapped_span_pair: None,
                })
            }
            BugKind::WrongBinop => {
                let op = vocab_index(&self.original_text).ok_or(RepairError::Malformed(self.kind))?;
                Ok(BugEdit {
                    kind: self.kind,
                    loc_index: loc,
                    repair: Repair::Operator(op),
                    original_text: repaired[loc].text.clone(),
                    swapped_span_pair: None,
                })
            }
            BugKind::ArgSwap => {
                let (a, b) = self.swapped_span_pair.clone().ok_or(RepairError::Malformed(self.kind))?;
                let (na, nb) = swapped_slots(&a, &b);
                Ok(BugEdit {
                    kind: self.kind,
                    loc_index: na.start,
                    repair: Repair::Token(nb.start),
                    original_text: repaired[na.start].text.clone(),
                    swapped_span_pair: Some((na, nb)),
                })
            }
        }
    }
}

/// Recovers the bug-fixing edit between `before` (buggy) and `after` (fixed)
/// if the two differ by exactly one rewrite of `kind`.
///
/// Both versions are checked against the candidate rules: the location must
/// be a candidate in each, and each side's text must be a valid repair of the
/// other. Ambiguous alignments yield `None`.
pub fn extract_real_bug(before: &TokenStream, after: &TokenStream, kind: BugKind) -> Option<RealBug> {
    if before.len() != after.len() {
        return None;
    }
    let diff: Vec<usize> = (0..before.len()).filter(|&i| before[i].text != after[i].text).collect();
    if diff.is_empty() {
        return None;
    }
    let cands_before = candidates_for(before, kind).ok()?;
    let cands_after = candidates_for(after, kind).ok()?;
    let edit = match kind {
        BugKind::VarMisuse | BugKind::WrongBinop => {
            if diff.len() != 1 {
                return None;
            }
            let i = diff[0];
            let reps_before = cands_before.rep_of.get(&i)?;
            let reps_after = cands_after.rep_of.get(&i)?;
            if kind == BugKind::VarMisuse {
                let buggy = &before[i].text;
                let fixed = &after[i].text;
                if !reps_after.iter().any(|&r| after[r].text == *buggy) {
                    return None;
                }
                let def = reps_before.iter().copied().find(|&r| before[r].text == *fixed)?;
                BugEdit {
                    kind,
                    loc_index: i,
                    repair: Repair::Token(def),
                    original_text: buggy.clone(),
                    swapped_span_pair: None,
                }
            } else {
                let fixed_op = vocab_index(&after[i].text)?;
                let buggy_op = vocab_index(&before[i].text)?;
                if !reps_before.contains(&fixed_op) || !reps_after.contains(&buggy_op) {
                    return None;
                }
                BugEdit {
                    kind,
                    loc_index: i,
                    repair: Repair::Operator(fixed_op),
                    original_text: before[i].text.clone(),
                    swapped_span_pair: None,
                }
            }
        }
        BugKind::ArgSwap => {
            let lo = diff[0];
            let hi = diff[diff.len() - 1];
            let mut matches = Vec::new();
            let arg_starts: Vec<usize> = cands_after.loc.clone();
            for &a_start in &arg_starts {
                let a = &cands_after.arg_ranges[&a_start];
                if a.start > lo {
                    continue;
                }
                for &b_start in &cands_after.rep_of[&a_start] {
                    let b = &cands_after.arg_ranges[&b_start];
                    if b.start <= a.start || b.end <= hi {
                        continue;
                    }
                    let swapped = swap_ranges(after.tokens(), a, b);
                    if swapped.iter().zip(before.iter()).all(|(x, y)| x.text == y.text) {
                        matches.push((a.clone(), b.clone()));
                    }
                }
            }
            if matches.len() != 1 {
                return None;
            }
            let (a, b) = matches.pop().expect("one match");
            let (nf, ns) = swapped_slots(&a, &b);
            let reps = cands_before.rep_of.get(&nf.start)?;
            if !reps.contains(&ns.start) {
                return None;
            }
            BugEdit {
                kind,
                loc_index: nf.start,
                repair: Repair::Token(ns.start),
                original_text: before[nf.start].text.clone(),
                swapped_span_pair: Some((nf, ns)),
            }
        }
    };
    Some(RealBug { buggy_tokens: before.clone(), edit, provenance: Provenance::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::lex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(src: &str, kind: BugKind) -> (TokenStream, CandidateMap) {
        let ts = lex(src).unwrap();
        let c = candidates_for(&ts, kind).unwrap();
        (ts, c)
    }

    fn pos(ts: &TokenStream, text: &str, nth: usize) -> usize {
        ts.iter().filter(|t| t.text == text).nth(nth).unwrap().index
    }

    #[test]
    fn forced_var_misuse_rewrites_chosen_use() {
        let (ts, c) = setup("def compute_area(width, height):\n  return width * height\n", BugKind::VarMisuse);
        let l = pos(&ts, "height", 1);
        let width_def = pos(&ts, "width", 0);
        let (buggy, edit) = inject_at(&ts, &c, l, Repair::Token(width_def)).unwrap();
        assert_eq!(buggy.render(), "def compute_area(width, height):\n    return width * width\n");
        assert_eq!(edit.original_text, "width");
        assert_eq!(edit.repair, Repair::Token(pos(&ts, "height", 0)));
        assert!(apply_repair(&buggy, &edit).unwrap().same_text(&ts));
    }

    #[test]
    fn wrong_binop_repair_restores_correct_version() {
        let (ts, c) = setup("def compute_area(width, height):\n  return width * height\n", BugKind::WrongBinop);
        let l = c.loc[0];
        let (buggy, edit) = inject_at(&ts, &c, l, Repair::Operator(vocab_index("+").unwrap())).unwrap();
        assert_eq!(buggy[l].text, "+");
        assert_eq!(edit.repair, Repair::Operator(vocab_index("*").unwrap()));
        let fixed = apply_repair(&buggy, &edit).unwrap();
        assert_eq!(fixed, ts);
    }

    #[test]
    fn arg_swap_repair_swaps_arguments() {
        let buggy = lex("def buy_with(account):\n  return lib.withdraw(120.0, account)\n").unwrap();
        let c = candidates_for(&buggy, BugKind::ArgSwap).unwrap();
        let (fixed, _) = inject_at(&buggy, &c, c.loc[0], Repair::Token(c.loc[1])).unwrap();
        assert!(fixed.render().contains("lib.withdraw(account, 120.0)"));
        let edit = BugEdit {
            kind: BugKind::ArgSwap,
            loc_index: c.loc[0],
            repair: Repair::Token(c.loc[1]),
            original_text: "120.0".into(),
            swapped_span_pair: Some((c.arg_ranges[&c.loc[0]].clone(), c.arg_ranges[&c.loc[1]].clone())),
        };
        let repaired = apply_repair(&buggy, &edit).unwrap();
        assert!(repaired.render().contains("lib.withdraw(account, 120.0)"));
    }

    #[test]
    fn multi_token_arguments_swap_and_restore() {
        let (ts, c) = setup("def f(a, b):\n    return g(a + 1, h(b), 3)\n", BugKind::ArgSwap);
        for (l, r) in rewrite_pairs(&ts, &c) {
            let (buggy, edit) = inject_at(&ts, &c, l, r).unwrap();
            assert!(!buggy.same_text(&ts));
            let fixed = apply_repair(&buggy, &edit).unwrap();
            assert_eq!(fixed, ts);
            let mined = extract_real_bug(&buggy, &ts, BugKind::ArgSwap).unwrap();
            assert_eq!(mined.edit, edit);
        }
    }

    #[test]
    fn single_pair_is_seed_independent() {
        let (ts, c) = setup("def f(a, b):\n    return a < b\n", BugKind::WrongBinop);
        // restrict to a single rewrite
        let mut single = c.clone();
        let l = single.loc[0];
        single.rep_of.insert(l, vec![vocab_index("<=").unwrap()]);
        let outcomes: Vec<_> = (0..20u64)
            .map(|s| inject(&ts, &single, &mut ChaCha8Rng::seed_from_u64(s)).unwrap().0.render())
            .collect();
        assert!(outcomes.windows(2).all(|w| w[0] == w[1]));
        assert!(outcomes[0].contains("a <= b"));
    }

    #[test]
    fn empty_candidates_fail_to_inject() {
        let (ts, c) = setup("def f():\n    return 1\n", BugKind::VarMisuse);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(inject(&ts, &c, &mut rng).unwrap_err(), InjectError::NoCandidates(BugKind::VarMisuse));
    }

    #[test]
    fn injection_frequencies_are_uniform_over_pairs() {
        // two locations (a, b), each with two other variables defined earlier
        let (ts, c) = setup("def f(a, b, c):\n    return a + b\n", BugKind::VarMisuse);
        let pairs = rewrite_pairs(&ts, &c);
        assert_eq!(pairs.len(), 4);
        let mut counts = vec![0usize; 4];
        let n = 1000;
        for seed in 0..n as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (buggy, edit) = inject(&ts, &c, &mut rng).unwrap();
            let key = pairs
                .iter()
                .position(|&(l, r)| match r {
                    Repair::Token(r) => l == edit.loc_index && buggy[l].text == ts[r].text,
                    Repair::Operator(_) => false,
                })
                .unwrap();
            counts[key] += 1;
        }
        for &k in &counts {
            let freq = k as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn identical_versions_yield_nothing() {
        let ts = lex("def f(a, b):\n    return a + b\n").unwrap();
        for kind in BugKind::ALL {
            assert!(extract_real_bug(&ts, &ts, kind).is_none());
        }
    }

    #[test]
    fn two_operator_changes_yield_nothing() {
        let before = lex("def f(a, b):\n    return a - b < a * b\n").unwrap();
        let after = lex("def f(a, b):\n    return a + b < a / b\n").unwrap();
        assert!(extract_real_bug(&before, &after, BugKind::WrongBinop).is_none());
    }

    #[test]
    fn cross_set_operator_change_is_not_a_rule_match() {
        let before = lex("def f(a, b):\n    return a < b\n").unwrap();
        let after = lex("def f(a, b):\n    return a + b\n").unwrap();
        assert!(extract_real_bug(&before, &after, BugKind::WrongBinop).is_none());
    }

    #[test]
    fn repair_errors() {
        let (ts, c) = setup("def f(a, b):\n    return a + b\n", BugKind::WrongBinop);
        let (buggy, mut edit) = inject(&ts, &c, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        edit.loc_index = 999;
        assert!(matches!(apply_repair(&buggy, &edit), Err(RepairError::IndexOutOfRange { .. })));
        edit.loc_index = 0;
        assert!(matches!(apply_repair(&buggy, &edit), Err(RepairError::TextMismatch { .. })));
    }

    #[test]
    fn inverse_edit_round_trips() {
        for (src, kind) in [
            ("def f(a, b, c):\n    x = a * b\n    return x - c\n", BugKind::VarMisuse),
            ("def f(a, b, c):\n    x = a * b\n    return x - c\n", BugKind::WrongBinop),
            ("def f(a, b, c):\n    return g(a, b * 2, c)\n", BugKind::ArgSwap),
        ] {
            let (ts, c) = setup(src, kind);
            for (l, r) in rewrite_pairs(&ts, &c) {
                let (buggy, edit) = inject_at(&ts, &c, l, r).unwrap();
                let fixed = apply_repair(&buggy, &edit).unwrap();
                let inv = edit.inverse(&fixed).unwrap();
                let rebroken = apply_repair(&fixed, &inv).unwrap();
                assert!(rebroken.same_text(&buggy), "{kind}");
            }
        }
    }
}
