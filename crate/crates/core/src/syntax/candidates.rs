//! Per-bug-kind candidate bug locations and repairs.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::analyze::SyntacticFacts;
use super::lexer::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugKind {
    #[serde(rename = "var-misuse")]
    VarMisuse,
    #[serde(rename = "wrong-binop")]
    WrongBinop,
    #[serde(rename = "arg-swap")]
    ArgSwap,
}

impl BugKind {
    pub const ALL: [BugKind; 3] = [BugKind::VarMisuse, BugKind::WrongBinop, BugKind::ArgSwap];

    pub fn as_str(self) -> &'static str {
        match self {
            BugKind::VarMisuse => "var-misuse",
            BugKind::WrongBinop => "wrong-binop",
            BugKind::ArgSwap => "arg-swap",
        }
    }

    /// Repairs are operators from a fixed vocabulary rather than tokens.
    pub fn has_fixed_repairs(self) -> bool {
        self == BugKind::WrongBinop
    }
}

impl fmt::Display for BugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BugKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "var-misuse" => Ok(BugKind::VarMisuse),
            "wrong-binop" => Ok(BugKind::WrongBinop),
            "arg-swap" => Ok(BugKind::ArgSwap),
            other => Err(format!("unknown bug kind {other:?} (expected var-misuse, wrong-binop or arg-swap)")),
        }
    }
}

/// Operator vocabulary for wrong-binop repairs: arithmetic, comparison and
/// boolean operators in that order.
pub const BINOP_VOCAB: [&str; 17] = [
    "+", "*", "-", "/", "%", "==", "!=", "is", "is not", "<", "<=", ">", ">=", "in", "not in", "and", "or",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorSet {
    Arithmetic,
    Comparison,
    Boolean,
}

impl OperatorSet {
    pub fn vocab_range(self) -> Range<usize> {
        match self {
            OperatorSet::Arithmetic => 0..5,
            OperatorSet::Comparison => 5..15,
            OperatorSet::Boolean => 15..17,
        }
    }
}

pub fn vocab_index(op: &str) -> Option<usize> {
    BINOP_VOCAB.iter().position(|o| *o == op)
}

pub fn operator_set(op: &str) -> Option<OperatorSet> {
    let i = vocab_index(op)?;
    [OperatorSet::Arithmetic, OperatorSet::Comparison, OperatorSet::Boolean]
        .into_iter()
        .find(|s| s.vocab_range().contains(&i))
}

/// Candidate bug locations (`loc`) and, per location, candidate repairs.
///
/// Repairs are token indices for var-misuse and arg-swap and operator
/// vocabulary indices for wrong-binop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMap {
    pub kind: BugKind,
    pub loc: Vec<usize>,
    pub rep_of: BTreeMap<usize, Vec<usize>>,
    /// var-misuse: definition tokens of the variable used at each location,
    /// i.e. the correct repairs if that location were the bug.
    pub own_defs: BTreeMap<usize, Vec<usize>>,
    /// arg-swap: token range of the argument whose first token is the location.
    pub arg_ranges: BTreeMap<usize, Range<usize>>,
}

impl CandidateMap {
    pub fn empty(kind: BugKind) -> Self {
        CandidateMap {
            kind,
            loc: Vec::new(),
            rep_of: BTreeMap::new(),
            own_defs: BTreeMap::new(),
            arg_ranges: BTreeMap::new(),
        }
    }

    pub fn contains_loc(&self, l: usize) -> bool {
        self.rep_of.contains_key(&l)
    }

    /// Number of (location, repair) pairs.
    pub fn pair_count(&self) -> usize {
        self.rep_of.values().map(Vec::len).sum()
    }
}

pub fn extract_candidates(facts: &SyntacticFacts, tokens: &[Token], kind: BugKind) -> CandidateMap {
    let mut map = CandidateMap::empty(kind);
    match kind {
        BugKind::VarMisuse => {
            for u in facts.var_uses.iter().filter(|u| !u.in_function_signature) {
                let mut defined_before = false;
                let mut own = Vec::new();
                let mut rep = Vec::new();
                for d in facts.defs_in_scope(u.scope) {
                    if d.name == u.name {
                        own.push(d.index);
                        defined_before |= d.index < u.index;
                    } else {
                        rep.push(d.index);
                    }
                }
                if defined_before && !rep.is_empty() {
                    map.rep_of.insert(u.index, rep);
                    map.own_defs.insert(u.index, own);
                }
            }
        }
        BugKind::WrongBinop => {
            for b in &facts.binops {
                let (Some(set), Some(own)) = (operator_set(&b.op), vocab_index(&b.op)) else {
                    continue;
                };
                let rep: Vec<usize> = set.vocab_range().filter(|&i| i != own).collect();
                map.rep_of.insert(b.index, rep);
            }
        }
        BugKind::ArgSwap => {
            for call in &facts.calls {
                let handled: Vec<_> = call.handled_args().collect();
                if handled.len() < 2 {
                    continue;
                }
                for a in &handled {
                    if map.rep_of.contains_key(&a.range.start) {
                        continue;
                    }
                    let rep: Vec<usize> =
                        handled.iter().filter(|b| b.range != a.range).map(|b| b.range.start).collect();
                    map.rep_of.insert(a.range.start, rep);
                    map.arg_ranges.insert(a.range.start, a.range.clone());
                }
            }
        }
    }
    debug_assert!(map.rep_of.keys().all(|&l| l < tokens.len()));
    map.loc = map.rep_of.keys().copied().collect();
    map
}

/// A function is eligible for a bug kind iff it has at least one candidate
/// location.
pub fn is_eligible(candidates: &CandidateMap) -> bool {
    !candidates.loc.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{analyze, lex};

    fn cands(src: &str, kind: BugKind) -> (crate::syntax::TokenStream, CandidateMap) {
        let ts = lex(src).unwrap();
        let facts = analyze(&ts).unwrap();
        let c = extract_candidates(&facts, &ts, kind);
        (ts, c)
    }

    fn texts(ts: &[Token], idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&i| ts[i].text.clone()).collect()
    }

    #[test]
    fn var_misuse_compute_area() {
        let (ts, c) = cands("def compute_area(width, height):\n  return width * width\n", BugKind::VarMisuse);
        assert_eq!(texts(&ts, &c.loc), vec!["width", "width"]);
        for l in &c.loc {
            assert_eq!(texts(&ts, &c.rep_of[l]), vec!["height"]);
            assert_eq!(texts(&ts, &c.own_defs[l]), vec!["width"]);
        }
        assert!(is_eligible(&c));
    }

    #[test]
    fn wrong_binop_arithmetic_set() {
        let (ts, c) = cands("def compute_area(width, height):\n  return width + height\n", BugKind::WrongBinop);
        assert_eq!(texts(&ts, &c.loc), vec!["+"]);
        let reps: Vec<&str> = c.rep_of[&c.loc[0]].iter().map(|&i| BINOP_VOCAB[i]).collect();
        assert_eq!(reps, vec!["*", "-", "/", "%"]);
    }

    #[test]
    fn arg_swap_withdraw() {
        let (ts, c) = cands("def buy_with(account):\n  return lib.withdraw(120.0, account)\n", BugKind::ArgSwap);
        assert_eq!(texts(&ts, &c.loc), vec!["120.0", "account"]);
        assert_eq!(texts(&ts, &c.rep_of[&c.loc[0]]), vec!["account"]);
        assert_eq!(texts(&ts, &c.rep_of[&c.loc[1]]), vec!["120.0"]);
    }

    #[test]
    fn no_uses_is_ineligible() {
        let (_, c) = cands("def f(a, b):\n    return 1\n", BugKind::VarMisuse);
        assert!(!is_eligible(&c));
    }

    #[test]
    fn single_handled_argument_is_ineligible() {
        let (_, c) = cands("def f(a):\n    return g(a, key=1, *rest)\n", BugKind::ArgSwap);
        assert!(!is_eligible(&c));
    }

    #[test]
    fn use_before_definition_is_not_a_candidate() {
        let (ts, c) = cands("def f(a):\n    b = c\n    c = a\n    return b + c\n", BugKind::VarMisuse);
        let locs = texts(&ts, &c.loc);
        assert_eq!(locs, vec!["a", "b", "c"]);
        // the first `c` (line 2) is used before any definition
        assert!(!c.loc.contains(&ts.iter().position(|t| t.text == "c").unwrap()));
    }

    #[test]
    fn vocabulary_sets_partition_seventeen_operators() {
        let sizes: Vec<usize> = [OperatorSet::Arithmetic, OperatorSet::Comparison, OperatorSet::Boolean]
            .iter()
            .map(|s| s.vocab_range().len())
            .collect();
        assert_eq!(sizes, vec![5, 10, 2]);
        assert_eq!(sizes.iter().sum::<usize>(), BINOP_VOCAB.len());
        for (i, op) in BINOP_VOCAB.iter().enumerate() {
            assert_eq!(vocab_index(op), Some(i));
        }
    }

    #[test]
    fn comparison_and_boolean_rep_sizes() {
        let (_, c) = cands("def f(a, b):\n    return a is not b or a <= b\n", BugKind::WrongBinop);
        let sizes: Vec<usize> = c.loc.iter().map(|l| c.rep_of[l].len()).collect();
        assert_eq!(sizes, vec![9, 1, 9]);
    }
}
