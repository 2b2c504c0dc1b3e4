use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::ModelConfig;
use crate::scalar::Scalar;
use crate::syntax::{BugKind, BINOP_VOCAB};

/// One encoder layer: single-head self-attention and a (m, 4m) feed-forward
/// block, each followed by a residual connection and layer normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub wq: Array2<F>,
    pub bq: Array1<F>,
    pub wk: Array2<F>,
    pub bk: Array1<F>,
    pub wv: Array2<F>,
    pub bv: Array1<F>,
    pub wo: Array2<F>,
    pub bo: Array1<F>,
    pub ln1_g: Array1<F>,
    pub ln1_b: Array1<F>,
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
    pub ln2_g: Array1<F>,
    pub ln2_b: Array1<F>,
}

/// Repair head: a per-position pointer, or a fixed 17-way operator
/// classifier reading the classification position.
#[derive(Debug, Clone, PartialEq)]
pub enum RepHead<F> {
    Pointer { w: Array1<F>, b: Array1<F> },
    Operator { w1: Array2<F>, b1: Array1<F>, w2: Array2<F>, b2: Array1<F> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub tok_emb: Array2<F>,
    pub pos_emb: Array2<F>,
    pub layers: Vec<Layer<F>>,
    pub cls_w1: Array2<F>,
    pub cls_b1: Array1<F>,
    pub cls_w2: Array2<F>,
    pub cls_b2: Array1<F>,
    pub loc_w: Array1<F>,
    pub loc_b: Array1<F>,
    pub rep: RepHead<F>,
}

impl<F: Scalar> Layer<F> {
    fn zeros(m: usize) -> Self {
        let z2 = |r, c| Array2::zeros((r, c));
        let z1 = |n| Array1::zeros(n);
        Layer {
            wq: z2(m, m),
            bq: z1(m),
            wk: z2(m, m),
            bk: z1(m),
            wv: z2(m, m),
            bv: z1(m),
            wo: z2(m, m),
            bo: z1(m),
            ln1_g: z1(m),
            ln1_b: z1(m),
            w1: z2(m, 4 * m),
            b1: z1(4 * m),
            w2: z2(4 * m, m),
            b2: z1(m),
            ln2_g: z1(m),
            ln2_b: z1(m),
        }
    }
}

impl<F: Scalar> ModelParams<F> {
    /// All-zero parameters shaped for `config`; also used as a gradient
    /// accumulator.
    pub fn zeros(config: &ModelConfig) -> Self {
        let m = config.dim;
        let rep = match config.kind {
            BugKind::WrongBinop => RepHead::Operator {
                w1: Array2::zeros((m, m)),
                b1: Array1::zeros(m),
                w2: Array2::zeros((m, BINOP_VOCAB.len())),
                b2: Array1::zeros(BINOP_VOCAB.len()),
            },
            _ => RepHead::Pointer { w: Array1::zeros(m), b: Array1::zeros(1) },
        };
        ModelParams {
            tok_emb: Array2::zeros((config.vocab_size, m)),
            pos_emb: Array2::zeros((config.max_len + 1, m)),
            layers: (0..config.layers).map(|_| Layer::zeros(m)).collect(),
            cls_w1: Array2::zeros((m, m)),
            cls_b1: Array1::zeros(m),
            cls_w2: Array2::zeros((m, 2)),
            cls_b2: Array1::zeros(2),
            loc_w: Array1::zeros(m),
            loc_b: Array1::zeros(1),
            rep,
        }
    }

    /// Weights uniform in [-1/sqrt(m), 1/sqrt(m)], biases zero, layer-norm
    /// gains one.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        let a = 1.0 / (config.dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a);
        p.for_each_mut(|name, mut t| {
            let leaf = name.rsplit('.').next().unwrap_or(name);
            if leaf.starts_with("ln") && leaf.ends_with("_g") {
                t.fill(F::one());
            } else if is_weight(leaf) {
                t.iter_mut().for_each(|x| *x = F::lit(dist.sample(rng)));
            }
        });
        p
    }

    /// Visits every tensor in a fixed order with a stable name.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&str, ArrayViewD<'a, F>)) {
        f("tok_emb", self.tok_emb.view().into_dyn());
        f("pos_emb", self.pos_emb.view().into_dyn());
        for (i, l) in self.layers.iter().enumerate() {
            let tensors: [(&str, ArrayViewD<'a, F>); 16] = [
                ("wq", l.wq.view().into_dyn()),
                ("bq", l.bq.view().into_dyn()),
                ("wk", l.wk.view().into_dyn()),
                ("bk", l.bk.view().into_dyn()),
                ("wv", l.wv.view().into_dyn()),
                ("bv", l.bv.view().into_dyn()),
                ("wo", l.wo.view().into_dyn()),
                ("bo", l.bo.view().into_dyn()),
                ("ln1_g", l.ln1_g.view().into_dyn()),
                ("ln1_b", l.ln1_b.view().into_dyn()),
                ("w1", l.w1.view().into_dyn()),
                ("b1", l.b1.view().into_dyn()),
                ("w2", l.w2.view().into_dyn()),
                ("b2", l.b2.view().into_dyn()),
                ("ln2_g", l.ln2_g.view().into_dyn()),
                ("ln2_b", l.ln2_b.view().into_dyn()),
            ];
            for (n, t) in tensors {
                f(&format!("layer{i}.{n}"), t);
            }
        }
        f("cls.w1", self.cls_w1.view().into_dyn());
        f("cls.b1", self.cls_b1.view().into_dyn());
        f("cls.w2", self.cls_w2.view().into_dyn());
        f("cls.b2", self.cls_b2.view().into_dyn());
        f("loc.w", self.loc_w.view().into_dyn());
        f("loc.b", self.loc_b.view().into_dyn());
        match &self.rep {
            RepHead::Pointer { w, b } => {
                f("rep.w", w.view().into_dyn());
                f("rep.b", b.view().into_dyn());
            }
            RepHead::Operator { w1, b1, w2, b2 } => {
                f("rep.w1", w1.view().into_dyn());
                f("rep.b1", b1.view().into_dyn());
                f("rep.w2", w2.view().into_dyn());
                f("rep.b2", b2.view().into_dyn());
            }
        }
    }

    /// Mutable counterpart of [`for_each`](Self::for_each), same order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, ArrayViewMutD<'_, F>)) {
        self.tensors_mut().into_iter().for_each(|(n, t)| f(&n, t));
    }

    /// Mutable views of every tensor, in [`for_each`](Self::for_each) order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut out: Vec<(String, ArrayViewMutD<'_, F>)> = vec![
            ("tok_emb".into(), self.tok_emb.view_mut().into_dyn()),
            ("pos_emb".into(), self.pos_emb.view_mut().into_dyn()),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let tensors: [(&str, ArrayViewMutD<'_, F>); 16] = [
                ("wq", l.wq.view_mut().into_dyn()),
                ("bq", l.bq.view_mut().into_dyn()),
                ("wk", l.wk.view_mut().into_dyn()),
                ("bk", l.bk.view_mut().into_dyn()),
                ("wv", l.wv.view_mut().into_dyn()),
                ("bv", l.bv.view_mut().into_dyn()),
                ("wo", l.wo.view_mut().into_dyn()),
                ("bo", l.bo.view_mut().into_dyn()),
                ("ln1_g", l.ln1_g.view_mut().into_dyn()),
                ("ln1_b", l.ln1_b.view_mut().into_dyn()),
                ("w1", l.w1.view_mut().into_dyn()),
                ("b1", l.b1.view_mut().into_dyn()),
                ("w2", l.w2.view_mut().into_dyn()),
                ("b2", l.b2.view_mut().into_dyn()),
                ("ln2_g", l.ln2_g.view_mut().into_dyn()),
                ("ln2_b", l.ln2_b.view_mut().into_dyn()),
            ];
            out.extend(tensors.into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.push(("cls.w1".into(), self.cls_w1.view_mut().into_dyn()));
        out.push(("cls.b1".into(), self.cls_b1.view_mut().into_dyn()));
        out.push(("cls.w2".into(), self.cls_w2.view_mut().into_dyn()));
        out.push(("cls.b2".into(), self.cls_b2.view_mut().into_dyn()));
        out.push(("loc.w".into(), self.loc_w.view_mut().into_dyn()));
        out.push(("loc.b".into(), self.loc_b.view_mut().into_dyn()));
        match &mut self.rep {
            RepHead::Pointer { w, b } => {
                out.push(("rep.w".into(), w.view_mut().into_dyn()));
                out.push(("rep.b".into(), b.view_mut().into_dyn()));
            }
            RepHead::Operator { w1, b1, w2, b2 } => {
                out.push(("rep.w1".into(), w1.view_mut().into_dyn()));
                out.push(("rep.b1".into(), b1.view_mut().into_dyn()));
                out.push(("rep.w2".into(), w2.view_mut().into_dyn()));
                out.push(("rep.b2".into(), b2.view_mut().into_dyn()));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.len());
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, alpha: F) {
        let mut src = Vec::new();
        other.for_each(|_, t| src.push(t));
        for ((_, mut dst), s) in self.tensors_mut().into_iter().zip(src) {
            dst.scaled_add(alpha, &s);
        }
    }

    pub fn scale(&mut self, alpha: F) {
        self.for_each_mut(|_, mut t| t.mapv_inplace(|x| x * alpha));
    }

    /// Converts every tensor to another scalar type.
    pub fn cast<G: Scalar>(&self, config: &ModelConfig) -> ModelParams<G> {
        let mut out = ModelParams::<G>::zeros(config);
        let mut src = Vec::new();
        self.for_each(|_, t| src.push(t));
        for ((_, mut dst), s) in out.tensors_mut().into_iter().zip(src) {
            dst.zip_mut_with(&s, |d, &x| *d = G::lit(x.as_f64()));
        }
        out
    }
}

fn is_weight(leaf: &str) -> bool {
    matches!(leaf, "tok_emb" | "pos_emb" | "wq" | "wk" | "wv" | "wo" | "w1" | "w2" | "w")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HeadsOrder, ModelConfig};
    use crate::rng::rng_for;

    fn cfg(kind: BugKind) -> ModelConfig {
        ModelConfig { vocab_size: 10, dim: 8, layers: 3, max_len: 6, ..ModelConfig::new(kind) }
    }

    #[test]
    fn init_respects_bounds() {
        let p: ModelParams<f64> = ModelParams::init(&cfg(BugKind::VarMisuse), &mut rng_for(0, 0));
        let bound = 1.0 / 8f64.sqrt();
        p.for_each(|name, t| {
            if name.ends_with("ln1_g") || name.ends_with("ln2_g") {
                assert!(t.iter().all(|&x| x == 1.0));
            } else if name.contains(".b") || name.ends_with("_b") {
                assert!(t.iter().all(|&x| x == 0.0), "{name}");
            } else {
                assert!(t.iter().all(|&x| x.abs() <= bound), "{name}");
                assert!(t.iter().any(|&x| x != 0.0), "{name}");
            }
        });
    }

    #[test]
    fn order_does_not_change_parameter_count() {
        let mut a = cfg(BugKind::ArgSwap);
        let base = ModelParams::<f32>::zeros(&a).parameter_count();
        for order in ["cls,loc,rep", "rep,loc,cls", "loc,cls,rep", "flat"] {
            a.heads_order = order.parse::<HeadsOrder>().unwrap();
            assert_eq!(ModelParams::<f32>::zeros(&a).parameter_count(), base);
        }
    }

    #[test]
    fn visit_orders_agree() {
        let mut p: ModelParams<f64> = ModelParams::init(&cfg(BugKind::WrongBinop), &mut rng_for(1, 0));
        let mut a = Vec::new();
        p.for_each(|n, t| a.push((n.to_string(), t.len())));
        let b: Vec<_> = p.tensors_mut().into_iter().map(|(n, t)| (n, t.len())).collect();
        assert_eq!(a, b);
    }
}
