//! Dependency-aware evaluation: per-target judgments, precision and recall,
//! and precision-recall curves swept over the classification threshold.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{DatasetSplit, Sample};
use crate::model::{classify, point, Model, ModelError, Prediction};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no buggy samples to evaluate against")]
    NoBuggy,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Tp,
    Fp,
    Fn,
    Tn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Target {
    #[serde(rename = "cls")]
    Cls,
    #[serde(rename = "cls-loc")]
    ClsLoc,
    #[serde(rename = "cls-loc-rep")]
    ClsLocRep,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Cls, Target::ClsLoc, Target::ClsLocRep];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Cls => "cls",
            Target::ClsLoc => "cls-loc",
            Target::ClsLocRep => "cls-loc-rep",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Judgment {
    pub cls: Outcome,
    pub cls_loc: Outcome,
    pub cls_loc_rep: Outcome,
}

impl Judgment {
    /// Grades one sample from the classification decision, the label and
    /// whether the pointed location and repair are correct.
    pub fn from_parts(flagged: bool, buggy: bool, loc_ok: bool, rep_ok: bool) -> Self {
        let cls = match (flagged, buggy) {
            (true, true) => Outcome::Tp,
            (true, false) => Outcome::Fp,
            (false, true) => Outcome::Fn,
            (false, false) => Outcome::Tn,
        };
        let refine = |prev: Outcome, ok: bool| match prev {
            Outcome::Tp if ok => Outcome::Tp,
            Outcome::Tp | Outcome::Fp => Outcome::Fp,
            other => other,
        };
        let cls_loc = refine(cls, loc_ok);
        let cls_loc_rep = refine(cls_loc, rep_ok);
        Judgment { cls, cls_loc, cls_loc_rep }
    }

    pub fn get(&self, t: Target) -> Outcome {
        match t {
            Target::Cls => self.cls,
            Target::ClsLoc => self.cls_loc,
            Target::ClsLocRep => self.cls_loc_rep,
        }
    }
}

/// Whether the argmax location and repair hit the sample's targets.
pub fn pointer_hits<F: Scalar>(pred: &Prediction<F>, truth: &Sample) -> (bool, bool) {
    let (loc, rep) = point(pred);
    let loc_ok = truth.loc_target.get(loc).copied().unwrap_or(false);
    let rep_ok = truth.rep_target.get(rep).copied().unwrap_or(false);
    (loc_ok, rep_ok)
}

pub fn judge<F: Scalar>(pred: &Prediction<F>, truth: &Sample, threshold: F) -> Judgment {
    let (loc_ok, rep_ok) = pointer_hits(pred, truth);
    Judgment::from_parts(classify(pred, threshold) == 1, truth.is_buggy(), loc_ok, rep_ok)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TargetCounts {
    pub tp: usize,
    pub fp: usize,
    pub buggy: usize,
}

impl TargetCounts {
    /// Percentage; zero when nothing was flagged.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            100.0 * self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    /// Percentage of buggy samples; zero when there are none.
    pub fn recall(&self) -> f64 {
        if self.buggy == 0 {
            0.0
        } else {
            100.0 * self.tp as f64 / self.buggy as f64
        }
    }
}

/// Counts for [`Target::ALL`], in order. The number of buggy samples is
/// read off the classification outcomes (tp or fn).
pub fn precision_recall(judgments: &[Judgment]) -> [TargetCounts; 3] {
    let buggy = judgments.iter().filter(|j| matches!(j.cls, Outcome::Tp | Outcome::Fn)).count();
    Target::ALL.map(|t| {
        let mut c = TargetCounts { buggy, ..Default::default() };
        for j in judgments {
            match j.get(t) {
                Outcome::Tp => c.tp += 1,
                Outcome::Fp => c.fp += 1,
                _ => {}
            }
        }
        c
    })
}

/// A sample's buggy probability together with what its prediction got right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scored {
    pub score: f64,
    pub buggy: bool,
    pub loc_ok: bool,
    pub rep_ok: bool,
}

impl Scored {
    fn hit(&self, t: Target) -> bool {
        self.buggy
            && match t {
                Target::Cls => true,
                Target::ClsLoc => self.loc_ok,
                Target::ClsLocRep => self.loc_ok && self.rep_ok,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve over every distinct score, highest first, and the
/// step-sum average precision `sum (R_n - R_{n-1}) * P_n` (in percent).
/// Samples with equal scores enter the sweep together.
pub fn pr_curve_ap(scored: &[Scored], target: Target) -> Result<(Vec<CurvePoint>, f64), EvalError> {
    let buggy = scored.iter().filter(|s| s.buggy).count();
    if buggy == 0 {
        return Err(EvalError::NoBuggy);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].score.total_cmp(&scored[a].score).then(a.cmp(&b)));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scored[order[i]].score;
        while i < order.len() && scored[order[i]].score == threshold {
            if scored[order[i]].hit(target) {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / buggy as f64;
        let precision = 100.0 * tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        curve.push(CurvePoint { threshold, recall: 100.0 * recall, precision });
    }
    Ok((curve, ap))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetReport {
    pub target: Target,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub samples: usize,
    pub buggy: usize,
    pub targets: Vec<TargetReport>,
}

impl EvalReport {
    pub fn target(&self, t: Target) -> &TargetReport {
        &self.targets[t as usize]
    }

    /// Whitespace-separated `target recall precision` rows for plotting.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("# target recall precision\n");
        for t in &self.targets {
            for p in &t.curve {
                out.push_str(&format!("{} {:.6} {:.6}\n", t.target, p.recall, p.precision));
            }
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples {}  buggy {}  threshold {}", self.samples, self.buggy, self.threshold)?;
        writeln!(f, "{:<12}{:>6}{:>6}{:>10}{:>10}{:>10}", "target", "tp", "fp", "P", "R", "AP")?;
        for t in &self.targets {
            writeln!(
                f,
                "{:<12}{:>6}{:>6}{:>10.2}{:>10.2}{:>10.2}",
                t.target.as_str(),
                t.tp,
                t.fp,
                t.precision,
                t.recall,
                t.ap
            )?;
        }
        Ok(())
    }
}

/// Builds a report from per-sample scores at threshold `threshold`.
pub fn report_from_scored(scored: &[Scored], threshold: f64) -> Result<EvalReport, EvalError> {
    let judgments: Vec<Judgment> = scored
        .iter()
        .map(|s| Judgment::from_parts(s.score >= threshold, s.buggy, s.loc_ok, s.rep_ok))
        .collect();
    let counts = precision_recall(&judgments);
    let mut targets = Vec::new();
    for (t, c) in Target::ALL.into_iter().zip(counts) {
        let (curve, ap) = pr_curve_ap(scored, t)?;
        targets.push(TargetReport { target: t, tp: c.tp, fp: c.fp, precision: c.precision(), recall: c.recall(), ap, curve });
    }
    Ok(EvalReport { threshold, samples: scored.len(), buggy: counts[0].buggy, targets })
}

pub fn score_split<F: Scalar>(model: &Model<F>, split: &DatasetSplit) -> Result<Vec<Scored>, EvalError> {
    split
        .samples
        .iter()
        .map(|s| {
            let pred = model.predict(s)?;
            let (loc_ok, rep_ok) = pointer_hits(&pred, s);
            Ok(Scored { score: pred.p_buggy().as_f64(), buggy: s.is_buggy(), loc_ok, rep_ok })
        })
        .collect()
}

pub fn evaluate<F: Scalar>(model: &Model<F>, split: &DatasetSplit, threshold: f64) -> Result<EvalReport, EvalError> {
    report_from_scored(&score_split(model, split)?, threshold)
}

/// Classification-target average precision of `model` on `split`.
pub fn average_precision<F: Scalar>(model: &Model<F>, split: &DatasetSplit) -> Result<f64, EvalError> {
    Ok(pr_curve_ap(&score_split(model, split)?, Target::Cls)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(score: f64, buggy: bool) -> Scored {
        Scored { score, buggy, loc_ok: buggy, rep_ok: buggy }
    }

    #[test]
    fn three_score_example() {
        let (_, ap) = pr_curve_ap(&[sc(0.9, true), sc(0.8, false), sc(0.7, true)], Target::Cls).unwrap();
        assert!((ap - 250.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_ranking_and_single_buggy() {
        let (_, ap) = pr_curve_ap(&[sc(0.9, true), sc(0.8, true), sc(0.1, false)], Target::Cls).unwrap();
        assert_eq!(ap, 100.0);
        let (_, ap) = pr_curve_ap(&[sc(0.3, true)], Target::Cls).unwrap();
        assert_eq!(ap, 100.0);
        assert!(matches!(pr_curve_ap(&[sc(0.3, false)], Target::Cls), Err(EvalError::NoBuggy)));
    }

    #[test]
    fn ties_enter_together() {
        let (curve, ap) = pr_curve_ap(&[sc(0.5, true), sc(0.5, false)], Target::Cls).unwrap();
        assert_eq!(curve.len(), 1);
        assert_eq!(ap, 50.0);
    }

    #[test]
    fn judgments_follow_dependency() {
        let j = Judgment::from_parts(true, true, true, true);
        assert_eq!((j.cls, j.cls_loc, j.cls_loc_rep), (Outcome::Tp, Outcome::Tp, Outcome::Tp));
        let j = Judgment::from_parts(true, false, false, false);
        assert_eq!((j.cls, j.cls_loc, j.cls_loc_rep), (Outcome::Fp, Outcome::Fp, Outcome::Fp));
        let j = Judgment::from_parts(true, true, false, true);
        assert_eq!((j.cls, j.cls_loc, j.cls_loc_rep), (Outcome::Tp, Outcome::Fp, Outcome::Fp));
        let j = Judgment::from_parts(false, true, true, true);
        assert_eq!((j.cls, j.cls_loc, j.cls_loc_rep), (Outcome::Fn, Outcome::Fn, Outcome::Fn));
    }

    #[test]
    fn precision_recall_examples() {
        let tp = Judgment::from_parts(true, true, true, true);
        let fp = Judgment::from_parts(true, false, false, false);
        let fneg = Judgment::from_parts(false, true, false, false);
        let c = precision_recall(&[tp, fp, fneg]);
        assert_eq!((c[0].precision(), c[0].recall()), (50.0, 50.0));
        let c = precision_recall(&[fneg, Judgment::from_parts(false, false, false, false)]);
        assert_eq!((c[0].precision(), c[0].recall()), (0.0, 0.0));
        let c = precision_recall(&[tp, tp]);
        assert!(c.iter().all(|c| c.precision() == 100.0 && c.recall() == 100.0));
    }
}
