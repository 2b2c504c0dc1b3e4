use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mutate::{BugEdit, Repair};
use crate::syntax::{BugKind, CandidateMap, TokenStream, BINOP_VOCAB};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Synthetic,
    Real,
    Nonbuggy,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub repo: String,
    pub file: String,
    pub function: String,
    pub origin: Origin,
}

/// One labelled instance. Masks over positions have the same length as
/// `tokens`; the wrong-binop repair masks have one entry per operator in
/// [`BINOP_VOCAB`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub kind: BugKind,
    pub tokens: Vec<String>,
    pub label: i8,
    pub loc_mask: Vec<bool>,
    pub loc_target: Vec<bool>,
    pub rep_mask: Vec<bool>,
    pub rep_target: Vec<bool>,
    pub meta: SampleMeta,
}

/// Why a function could not become a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSkip {
    NoLocation,
    NoRepair,
    BugBeyondLength,
}

fn bits(n: usize, set: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut v = vec![false; n];
    for i in set {
        if i < n {
            v[i] = true;
        }
    }
    v
}

pub fn count_set(v: &[bool]) -> usize {
    v.iter().filter(|&&b| b).count()
}

pub fn set_bits(v: &[bool]) -> impl Iterator<Item = usize> + '_ {
    v.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
}

impl Sample {
    /// Builds a sample from a (possibly buggy) stream and its candidates.
    /// `edit` is the fix for a buggy stream and `None` for a correct one.
    /// Streams longer than `max_len` keep their prefix.
    pub fn build(
        tokens: &TokenStream,
        candidates: &CandidateMap,
        edit: Option<&BugEdit>,
        max_len: usize,
        meta: SampleMeta,
    ) -> Result<Sample, SampleSkip> {
        let kind = candidates.kind;
        let n = tokens.len().min(max_len);
        let texts: Vec<String> = tokens[..n].iter().map(|t| t.text.clone()).collect();
        let loc_mask = bits(n, candidates.loc.iter().copied());
        let rep_mask = match kind {
            BugKind::WrongBinop => bits(BINOP_VOCAB.len(), candidates.rep_of.values().flatten().copied()),
            _ => bits(n, candidates.rep_of.iter().filter(|(&l, _)| l < n).flat_map(|(_, r)| r.iter().copied())),
        };
        if !loc_mask.contains(&true) {
            return Err(SampleSkip::NoLocation);
        }
        if !rep_mask.contains(&true) {
            return Err(SampleSkip::NoRepair);
        }
        let (label, loc_target, rep_target) = match edit {
            None => (-1, vec![false; n], vec![false; rep_mask.len()]),
            Some(edit) => {
                let l = edit.loc_index;
                if l >= n {
                    return Err(SampleSkip::BugBeyondLength);
                }
                let reps = candidates.rep_of.get(&l).ok_or(SampleSkip::NoLocation)?;
                let correct: Vec<usize> = match (kind, edit.repair) {
                    (BugKind::VarMisuse, Repair::Token(r)) => {
                        let name = &tokens[r].text;
                        reps.iter().copied().filter(|&d| tokens[d].text == *name).collect()
                    }
                    (_, Repair::Token(r)) => vec![r],
                    (_, Repair::Operator(op)) => vec![op],
                };
                let rep_target = bits(rep_mask.len(), correct);
                if !rep_target.contains(&true) {
                    return Err(SampleSkip::BugBeyondLength);
                }
                (1, bits(n, [l]), rep_target)
            }
        };
        Ok(Sample { kind, tokens: texts, label, loc_mask, loc_target, rep_mask, rep_target, meta })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_buggy(&self) -> bool {
        self.label == 1
    }

    /// Index of the bug location, for buggy samples.
    pub fn bug_location(&self) -> Option<usize> {
        set_bits(&self.loc_target).next()
    }

    pub fn token_hash(&self) -> [u8; 32] {
        token_hash(&self.tokens)
    }

    /// Checks the structural invariants, returning a description of the
    /// first violation.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.tokens.len();
        let rep_len = match self.kind {
            BugKind::WrongBinop => BINOP_VOCAB.len(),
            _ => n,
        };
        if self.label != 1 && self.label != -1 {
            return Err(format!("label must be -1 or 1, got {}", self.label));
        }
        if self.loc_mask.len() != n || self.loc_target.len() != n {
            return Err("location mask length differs from token count".into());
        }
        if self.rep_mask.len() != rep_len || self.rep_target.len() != rep_len {
            return Err(format!("repair mask length must be {rep_len}"));
        }
        if !self.loc_mask.contains(&true) || !self.rep_mask.contains(&true) {
            return Err("empty candidate mask".into());
        }
        let subset = |t: &[bool], m: &[bool]| t.iter().zip(m).all(|(&t, &m)| !t || m);
        if !subset(&self.loc_target, &self.loc_mask) {
            return Err("location target outside location mask".into());
        }
        if !subset(&self.rep_target, &self.rep_mask) {
            return Err("repair target outside repair mask".into());
        }
        if self.is_buggy() {
            if count_set(&self.loc_target) != 1 {
                return Err("buggy sample needs exactly one location".into());
            }
            if !self.rep_target.contains(&true) {
                return Err("buggy sample needs a repair".into());
            }
        } else if self.loc_target.contains(&true) || self.rep_target.contains(&true) {
            return Err("non-buggy sample with targets".into());
        }
        Ok(())
    }
}

/// Stable hash of a token-text sequence.
pub fn token_hash<S: AsRef<str>>(texts: &[S]) -> [u8; 32] {
    let mut h = Sha256::new();
    for t in texts {
        let t = t.as_ref().as_bytes();
        h.update((t.len() as u64).to_le_bytes());
        h.update(t);
    }
    h.finalize().into()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SampleRecord {
    pub version: u32,
    pub kind: BugKind,
    pub tokens: Vec<String>,
    pub label: i8,
    pub loc_mask: Vec<u8>,
    pub loc_target: Vec<u8>,
    pub rep_mask: Vec<u8>,
    pub rep_target: Vec<u8>,
    pub meta: SampleMeta,
}

fn to_u8(v: &[bool]) -> Vec<u8> {
    v.iter().map(|&b| b as u8).collect()
}

fn from_u8(v: &[u8]) -> Result<Vec<bool>, String> {
    v.iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format!("mask entry {other} is not 0 or 1")),
        })
        .collect()
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        SampleRecord {
            version: FORMAT_VERSION,
            kind: s.kind,
            tokens: s.tokens.clone(),
            label: s.label,
            loc_mask: to_u8(&s.loc_mask),
            loc_target: to_u8(&s.loc_target),
            rep_mask: to_u8(&s.rep_mask),
            rep_target: to_u8(&s.rep_target),
            meta: s.meta.clone(),
        }
    }
}

impl TryFrom<SampleRecord> for Sample {
    type Error = String;

    fn try_from(r: SampleRecord) -> Result<Self, String> {
        if r.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", r.version));
        }
        let s = Sample {
            kind: r.kind,
            tokens: r.tokens,
            label: r.label,
            loc_mask: from_u8(&r.loc_mask)?,
            loc_target: from_u8(&r.loc_target)?,
            rep_mask: from_u8(&r.rep_mask)?,
            rep_target: from_u8(&r.rep_target)?,
            meta: r.meta,
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mutate::inject_at;
    use crate::syntax::{candidates_for, lex};

    fn meta() -> SampleMeta {
        SampleMeta { repo: "r".into(), file: "f.py".into(), function: "g".into(), origin: Origin::Synthetic }
    }

    #[test]
    fn var_misuse_sample_marks_location_and_definition() {
        let ts = lex("def compute_area(width, height):\n  return width * height\n").unwrap();
        let c = candidates_for(&ts, BugKind::VarMisuse).unwrap();
        let l = ts.iter().filter(|t| t.text == "height").nth(1).unwrap().index;
        let (buggy, edit) = inject_at(&ts, &c, l, Repair::Token(3)).unwrap();
        let bc = candidates_for(&buggy, BugKind::VarMisuse).unwrap();
        let s = Sample::build(&buggy, &bc, Some(&edit), 512, meta()).unwrap();
        s.validate().unwrap();
        assert_eq!(s.bug_location(), Some(l));
        let reps: Vec<_> = set_bits(&s.rep_target).collect();
        assert_eq!(reps, vec![5]);
        assert_eq!(s.tokens[5], "height");
    }

    #[test]
    fn truncation_beyond_bug_skips() {
        let ts = lex("def f(a, b):\n    c = a + b\n    return c - a\n").unwrap();
        let c = candidates_for(&ts, BugKind::WrongBinop).unwrap();
        let last = *c.loc.last().unwrap();
        let (buggy, edit) = inject_at(&ts, &c, last, Repair::Operator(0)).unwrap();
        let bc = candidates_for(&buggy, BugKind::WrongBinop).unwrap();
        let r = Sample::build(&buggy, &bc, Some(&edit), last, meta());
        assert_eq!(r.unwrap_err(), SampleSkip::BugBeyondLength);
        assert!(Sample::build(&buggy, &bc, Some(&edit), last + 1, meta()).is_ok());
    }

    #[test]
    fn validation_rejects_bad_records() {
        let ts = lex("def f(a, b):\n    return a + b\n").unwrap();
        let c = candidates_for(&ts, BugKind::WrongBinop).unwrap();
        let s = Sample::build(&ts, &c, None, 512, meta()).unwrap();
        assert!(s.validate().is_ok());
        let mut bad = s.clone();
        bad.label = 0;
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.label = 1;
        bad.loc_target = bad.loc_mask.iter().map(|&m| m).collect();
        bad.rep_target[0] = true;
        bad.rep_mask[0] = false;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn hash_distinguishes_boundaries() {
        assert_ne!(token_hash(&["ab", "c"]), token_hash(&["a", "bc"]));
        assert_eq!(token_hash(&["x"]), token_hash(&["x".to_string()]));
    }
}
