//! Loss terms, their derivatives with respect to the model outputs, and the
//! per-phase compositions.

use log::warn;
use ndarray::Array1;
use serde::Serialize;

use super::LearnError;
use crate::corpus::Sample;
use crate::model::{ModelConfig, OutputGrads, Prediction};
use crate::scalar::Scalar;

/// Floor applied to probabilities inside logarithms.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown<F> {
    pub l_cls: F,
    pub l_loc: F,
    pub l_rep: F,
    pub l_contrastive: F,
    pub total: F,
}

impl<F: Scalar> LossBreakdown<F> {
    pub fn add(&mut self, o: &Self) {
        self.l_cls += o.l_cls;
        self.l_loc += o.l_loc;
        self.l_rep += o.l_rep;
        self.l_contrastive += o.l_contrastive;
        self.total += o.total;
    }

    pub fn scaled(&self, a: F) -> Self {
        LossBreakdown {
            l_cls: self.l_cls * a,
            l_loc: self.l_loc * a,
            l_rep: self.l_rep * a,
            l_contrastive: self.l_contrastive * a,
            total: self.total * a,
        }
    }

    pub fn to_f64(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            l_cls: self.l_cls.as_f64(),
            l_loc: self.l_loc.as_f64(),
            l_rep: self.l_rep.as_f64(),
            l_contrastive: self.l_contrastive.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

fn label_index(y: i8) -> usize {
    usize::from(y == 1)
}

/// `-(1 - p_y)^gamma * ln(p_y)` with `p_y` floored at [`LOG_EPS`].
pub fn focal_loss<F: Scalar>(p_cls: [F; 2], y: i8, gamma: F) -> F {
    let p = p_cls[label_index(y)];
    -(F::one() - p).powf(gamma) * p.max(F::lit(LOG_EPS)).ln()
}

/// Derivative of [`focal_loss`] with respect to `p_y`.
pub fn focal_loss_grad<F: Scalar>(p_cls: [F; 2], y: i8, gamma: F) -> F {
    let p = p_cls[label_index(y)];
    let q = F::one() - p;
    let eps = F::lit(LOG_EPS);
    let factor_term = if gamma > F::zero() && q > F::zero() {
        gamma * q.powf(gamma - F::one()) * p.max(eps).ln()
    } else {
        F::zero()
    };
    let log_term = if p > eps { q.powf(gamma) / p } else { F::zero() };
    factor_term - log_term
}

fn check_len<F>(p: &Array1<F>, c: &[bool]) -> Result<(), LearnError> {
    if p.len() != c.len() {
        return Err(LearnError::Shape(format!("{} probabilities for {} target bits", p.len(), c.len())));
    }
    Ok(())
}

/// `-sum_i P[i] * C[i]`: minus the probability mass on the targets.
pub fn pointer_loss<F: Scalar>(p: &Array1<F>, c: &[bool]) -> Result<F, LearnError> {
    check_len(p, c)?;
    Ok(-p.iter().zip(c).filter(|(_, &b)| b).map(|(&x, _)| x).sum::<F>())
}

/// `-ln(sum_i P[i] * C[i])`, the log-likelihood alternative.
pub fn log_pointer_loss<F: Scalar>(p: &Array1<F>, c: &[bool]) -> Result<F, LearnError> {
    let mass = -pointer_loss(p, c)?;
    Ok(-mass.max(F::lit(LOG_EPS)).ln())
}

fn pointer_grad<F: Scalar>(p: &Array1<F>, c: &[bool], log: bool) -> Array1<F> {
    let scale = if log {
        let mass: F = p.iter().zip(c).filter(|(_, &b)| b).map(|(&x, _)| x).sum();
        if mass > F::lit(LOG_EPS) {
            F::one() / mass
        } else {
            F::zero()
        }
    } else {
        F::one()
    };
    c.iter().map(|&b| if b { -scale } else { F::zero() }).collect()
}

fn norm<F: Scalar>(v: &Array1<F>) -> F {
    v.dot(v).sqrt()
}

/// Cosine similarity; zero (with a warning) if either vector is zero.
pub fn contrastive_loss<F: Scalar>(h: &Array1<F>, h_prime: &Array1<F>) -> F {
    let (a, b) = (norm(h), norm(h_prime));
    if a == F::zero() || b == F::zero() {
        warn!("zero classification embedding; contrastive term set to 0");
        return F::zero();
    }
    h.dot(h_prime) / (a * b)
}

/// Gradients of the cosine similarity with respect to both vectors.
pub fn contrastive_grad<F: Scalar>(h: &Array1<F>, h_prime: &Array1<F>) -> (Array1<F>, Array1<F>) {
    let (a, b) = (norm(h), norm(h_prime));
    if a == F::zero() || b == F::zero() {
        return (Array1::zeros(h.len()), Array1::zeros(h_prime.len()));
    }
    let c = h.dot(h_prime) / (a * b);
    let dh = h_prime / (a * b) - h * (c / (a * a));
    let dhp = h / (a * b) - h_prime * (c / (b * b));
    (dh, dhp)
}

/// The sample's own terms: focal classification loss and, for buggy samples,
/// the two pointer losses.
fn own_terms<F: Scalar>(pred: &Prediction<F>, sample: &Sample, config: &ModelConfig) -> Result<LossBreakdown<F>, LearnError> {
    let l_cls = focal_loss(pred.p_cls, sample.label, F::lit(config.gamma));
    let (l_loc, l_rep) = if sample.is_buggy() {
        let f = if config.log_pointer_loss { log_pointer_loss } else { pointer_loss };
        (f(&pred.p_loc, &sample.loc_target)?, f(&pred.p_rep, &sample.rep_target)?)
    } else {
        check_len(&pred.p_loc, &sample.loc_target)?;
        check_len(&pred.p_rep, &sample.rep_target)?;
        (F::zero(), F::zero())
    };
    Ok(LossBreakdown { l_cls, l_loc, l_rep, l_contrastive: F::zero(), total: l_cls + l_loc + l_rep })
}

/// Loss of one sample. Phase one takes the prediction for the sample's pair
/// counterpart and adds `beta * cos(h_cls, h'_cls)`; phase two takes none.
pub fn compute_loss<F: Scalar>(
    pred: &Prediction<F>,
    pair: Option<&Prediction<F>>,
    sample: &Sample,
    phase: Phase,
    config: &ModelConfig,
) -> Result<LossBreakdown<F>, LearnError> {
    let mut out = own_terms(pred, sample, config)?;
    match (phase, pair) {
        (Phase::One, Some(other)) => {
            out.l_contrastive = contrastive_loss(&pred.h_cls, &other.h_cls);
            out.total = out.l_cls + out.l_loc + out.l_rep + F::lit(config.beta) * out.l_contrastive;
        }
        (Phase::Two, None) => {}
        (Phase::One, None) => return Err(LearnError::Phase("phase 1 loss needs the pair counterpart".into())),
        (Phase::Two, Some(_)) => return Err(LearnError::Phase("phase 2 loss takes no pair".into())),
    }
    Ok(out)
}

/// Gradients of the sample's own terms, multiplied by `weight`.
pub(crate) fn own_grads<F: Scalar>(pred: &Prediction<F>, sample: &Sample, config: &ModelConfig, weight: F) -> OutputGrads<F> {
    let mut g = OutputGrads::zeros_like(pred);
    let y = label_index(sample.label);
    g.d_p_cls[y] = weight * focal_loss_grad(pred.p_cls, sample.label, F::lit(config.gamma));
    if sample.is_buggy() {
        let log = config.log_pointer_loss;
        g.d_p_loc = pointer_grad(&pred.p_loc, &sample.loc_target, log) * weight;
        g.d_p_rep = pointer_grad(&pred.p_rep, &sample.rep_target, log) * weight;
    }
    g
}
