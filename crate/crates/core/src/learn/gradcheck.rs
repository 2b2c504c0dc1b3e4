//! Central finite-difference check of [`backward`](super::backward).

use super::loss::{compute_loss, Phase};
use super::optim::{backward, Batch};
use super::LearnError;
use crate::model::{forward, Model};

/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding compare by absolute difference.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Tensor name and flat element index of the worst element.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Mean batch loss, recomputed from scratch.
pub fn batch_loss(model: &Model<f64>, batch: Batch<'_>) -> Result<f64, LearnError> {
    let cfg = &model.config;
    let run = |s: &crate::corpus::Sample| forward(&model.params, cfg, &model.vocab.encode(&s.tokens), s);
    let mut total = 0.0;
    match batch {
        Batch::Samples(samples) => {
            for s in samples {
                total += compute_loss(&run(s)?, None, s, Phase::Two, cfg)?.total;
            }
        }
        Batch::Pairs(pairs) => {
            for (a, b) in pairs {
                let (pa, pb) = (run(a)?, run(b)?);
                total += compute_loss(&pa, Some(&pb), a, Phase::One, cfg)?.total;
                total += compute_loss(&pb, None, b, Phase::Two, cfg)?.total;
            }
        }
    }
    Ok(total / batch.len() as f64)
}

/// Compares every parameter's analytic gradient with the central difference
/// `(L(w + eps) - L(w - eps)) / (2 eps)`.
pub fn check_gradients(model: &Model<f64>, batch: Batch<'_>, eps: f64) -> Result<GradCheck, LearnError> {
    let (grads, _) = backward(model, batch)?;
    let mut analytic = Vec::new();
    grads.for_each(|name, g| analytic.push((name.to_string(), g.iter().copied().collect::<Vec<f64>>())));

    let mut probe = model.clone();
    let mut worst = GradCheck { max_rel_err: 0.0, worst: (String::new(), 0), analytic: 0.0, numeric: 0.0, checked: 0 };
    for (t, (name, ga)) in analytic.iter().enumerate() {
        for (i, &a) in ga.iter().enumerate() {
            let set = |probe: &mut Model<f64>, f: &dyn Fn(f64) -> f64| {
                let mut tensors = probe.params.tensors_mut();
                let x = tensors[t].1.iter_mut().nth(i).expect("element in range");
                let old = *x;
                *x = f(old);
                old
            };
            let w = set(&mut probe, &|w| w + eps);
            let up = batch_loss(&probe, batch)?;
            set(&mut probe, &|_| w - eps);
            let down = batch_loss(&probe, batch)?;
            set(&mut probe, &|_| w);
            let n = (up - down) / (2.0 * eps);
            let e = relative_error(a, n);
            worst.checked += 1;
            if e > worst.max_rel_err || worst.worst.0.is_empty() {
                worst.max_rel_err = e;
                worst.worst = (name.clone(), i);
                worst.analytic = a;
                worst.numeric = n;
            }
        }
    }
    Ok(worst)
}
