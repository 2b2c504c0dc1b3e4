use super::loss::{compute_loss, contrastive_grad, own_grads, LossBreakdown, Phase};
use super::LearnError;
use crate::corpus::Sample;
use crate::model::{backward as backprop, forward_cached, Model, ModelParams};
use crate::scalar::Scalar;

/// A mini-batch: single samples for phase two, (correct, buggy) pairs for
/// phase one.
#[derive(Debug, Clone, Copy)]
pub enum Batch<'a> {
    Samples(&'a [&'a Sample]),
    Pairs(&'a [(&'a Sample, &'a Sample)]),
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        match self {
            Batch::Samples(s) => s.len(),
            Batch::Pairs(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phase(&self) -> Phase {
        match self {
            Batch::Samples(_) => Phase::Two,
            Batch::Pairs(_) => Phase::One,
        }
    }
}

/// Gradient of the batch-mean loss and the mean loss breakdown. A phase-one
/// pair contributes the loss of both members plus one contrastive term.
pub fn backward<F: Scalar>(model: &Model<F>, batch: Batch<'_>) -> Result<(ModelParams<F>, LossBreakdown<F>), LearnError> {
    if batch.is_empty() {
        return Err(LearnError::Config("empty batch".into()));
    }
    let cfg = &model.config;
    let w = F::one() / F::lit(batch.len() as f64);
    let mut acc = ModelParams::zeros(cfg);
    let mut total = LossBreakdown::default();
    let run = |s: &Sample| {
        let ids = model.vocab.encode(&s.tokens);
        forward_cached(&model.params, cfg, &ids, s)
    };
    match batch {
        Batch::Samples(samples) => {
            for s in samples {
                let (pred, cache) = run(s)?;
                total.add(&compute_loss(&pred, None, s, Phase::Two, cfg)?);
                backprop(&model.params, &pred, &cache, &own_grads(&pred, s, cfg, w), &mut acc);
            }
        }
        Batch::Pairs(pairs) => {
            for (a, b) in pairs {
                let (pa, ca) = run(a)?;
                let (pb, cb) = run(b)?;
                total.add(&compute_loss(&pa, Some(&pb), a, Phase::One, cfg)?);
                total.add(&compute_loss(&pb, None, b, Phase::Two, cfg)?);
                let mut ga = own_grads(&pa, a, cfg, w);
                let mut gb = own_grads(&pb, b, cfg, w);
                let (dha, dhb) = contrastive_grad(&pa.h_cls, &pb.h_cls);
                let bw = F::lit(cfg.beta) * w;
                ga.d_h_cls.scaled_add(bw, &dha);
                gb.d_h_cls.scaled_add(bw, &dhb);
                backprop(&model.params, &pa, &ca, &ga, &mut acc);
                backprop(&model.params, &pb, &cb, &gb, &mut acc);
            }
        }
    }
    if !acc.all_finite() {
        return Err(LearnError::Numerics("gradient".into()));
    }
    Ok((acc, total.scaled(w)))
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    t: i32,
    m: ModelParams<F>,
    v: ModelParams<F>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(params: &ModelParams<F>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let mut zero = params.clone();
        zero.scale(F::zero());
        Adam { lr: F::lit(lr), beta1: F::lit(beta1), beta2: F::lit(beta2), eps: F::lit(eps), t: 0, m: zero.clone(), v: zero }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>) -> Result<(), LearnError> {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = F::one() - b1.powi(self.t);
        let c2 = F::one() - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        let mut gs = Vec::new();
        grads.for_each(|_, g| gs.push(g));
        let ps = params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((_, mut p), (_, mut m)), (_, mut v)), g) in ps.into_iter().zip(ms).zip(vs).zip(gs) {
            ndarray::Zip::from(&mut p).and(&mut m).and(&mut v).and(&g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
        if !params.all_finite() {
            return Err(LearnError::Numerics("parameter update".into()));
        }
        Ok(())
    }
}
