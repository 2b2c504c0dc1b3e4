use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::{Layer, ModelParams, RepHead};
use super::{masked_softmax, ModelConfig, ModelError, Prediction, Task};
use crate::corpus::Sample;
use crate::scalar::Scalar;
use crate::syntax::{BugKind, BINOP_VOCAB};

const LN_EPS: f64 = 1e-5;

/// Intermediate values of one encoder layer kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache<F> {
    x: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    attn: Array2<F>,
    z: Array2<F>,
    xhat1: Array2<F>,
    inv1: Array1<F>,
    h1: Array2<F>,
    u: Array2<F>,
    g: Array2<F>,
    xhat2: Array2<F>,
    inv2: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    ids: Vec<usize>,
    /// Output of every layer; entry 0 is the embedding sum.
    hidden: Vec<Array2<F>>,
    layers: Vec<LayerCache<F>>,
    cls_hidden: Array1<F>,
    rep_hidden: Option<Array1<F>>,
    cls_layer: usize,
    loc_layer: usize,
    rep_layer: usize,
}

/// Loss gradients with respect to the prediction's probabilities and the
/// classification feature.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads<F> {
    pub d_p_cls: [F; 2],
    pub d_p_loc: Array1<F>,
    pub d_p_rep: Array1<F>,
    pub d_h_cls: Array1<F>,
}

impl<F: Scalar> OutputGrads<F> {
    pub fn zeros_like(pred: &Prediction<F>) -> Self {
        OutputGrads {
            d_p_cls: [F::zero(); 2],
            d_p_loc: Array1::zeros(pred.p_loc.len()),
            d_p_rep: Array1::zeros(pred.p_rep.len()),
            d_h_cls: Array1::zeros(pred.h_cls.len()),
        }
    }
}

fn gelu<F: Scalar>(u: F) -> F {
    let c = F::lit((2.0 / std::f64::consts::PI).sqrt());
    let t = (c * (u + F::lit(0.044715) * u * u * u)).tanh();
    F::lit(0.5) * u * (F::one() + t)
}

fn gelu_grad<F: Scalar>(u: F) -> F {
    let c = F::lit((2.0 / std::f64::consts::PI).sqrt());
    let t = (c * (u + F::lit(0.044715) * u * u * u)).tanh();
    let half = F::lit(0.5);
    half * (F::one() + t) + half * u * (F::one() - t * t) * c * (F::one() + F::lit(3.0 * 0.044715) * u * u)
}

fn layer_norm<F: Scalar>(x: &Array2<F>, g: &Array1<F>, b: &Array1<F>) -> (Array2<F>, Array2<F>, Array1<F>) {
    let m = F::lit(x.ncols() as f64);
    let mut xhat = x.clone();
    let mut inv = Array1::zeros(x.nrows());
    for (mut row, iv) in xhat.rows_mut().into_iter().zip(inv.iter_mut()) {
        let mean = row.sum() / m;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<F>() / m;
        *iv = F::one() / (var + F::lit(LN_EPS)).sqrt();
        let s = *iv;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * g + b;
    (y, xhat, inv)
}

/// Returns dx and accumulates the gain and bias gradients.
fn layer_norm_backward<F: Scalar>(
    dy: &Array2<F>,
    xhat: &Array2<F>,
    inv: &Array1<F>,
    g: &Array1<F>,
    dg: &mut Array1<F>,
    db: &mut Array1<F>,
) -> Array2<F> {
    *dg += &(dy * xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let m = F::lit(dy.ncols() as f64);
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for r in 0..dy.nrows() {
        let dh = dxhat.row(r);
        let xh = xhat.row(r);
        let sum_d = dh.sum();
        let sum_dx = dh.dot(&xh);
        let scale = inv[r] / m;
        for c in 0..dy.ncols() {
            dx[[r, c]] = scale * (m * dh[c] - sum_d - xh[c] * sum_dx);
        }
    }
    dx
}

fn softmax_rows<F: Scalar>(s: &mut Array2<F>) {
    for mut row in s.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
}

/// Gradient through a softmax: `p_i * (g_i - sum_j p_j g_j)`.
fn softmax_backward<F: Scalar>(p: ArrayView1<F>, g: ArrayView1<F>) -> Array1<F> {
    let dot = p.dot(&g);
    Array1::from_shape_fn(p.len(), |i| p[i] * (g[i] - dot))
}

fn outer<F: Scalar>(a: ArrayView1<F>, b: ArrayView1<F>) -> Array2<F> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn layer_forward<F: Scalar>(l: &Layer<F>, x: Array2<F>) -> (Array2<F>, LayerCache<F>) {
    let m = x.ncols();
    let scale = F::lit(1.0 / (m as f64).sqrt());
    let q = x.dot(&l.wq) + &l.bq;
    let k = x.dot(&l.wk) + &l.bk;
    let v = x.dot(&l.wv) + &l.bv;
    let mut attn = q.dot(&k.t()) * scale;
    softmax_rows(&mut attn);
    let z = attn.dot(&v);
    let r1 = &x + &(z.dot(&l.wo) + &l.bo);
    let (h1, xhat1, inv1) = layer_norm(&r1, &l.ln1_g, &l.ln1_b);
    let u = h1.dot(&l.w1) + &l.b1;
    let g = u.mapv(gelu);
    let r2 = &h1 + &(g.dot(&l.w2) + &l.b2);
    let (out, xhat2, inv2) = layer_norm(&r2, &l.ln2_g, &l.ln2_b);
    (out, LayerCache { x, q, k, v, attn, z, xhat1, inv1, h1, u, g, xhat2, inv2 })
}

fn layer_backward<F: Scalar>(l: &Layer<F>, c: &LayerCache<F>, dy: &Array2<F>, acc: &mut Layer<F>) -> Array2<F> {
    let m = c.x.ncols();
    let scale = F::lit(1.0 / (m as f64).sqrt());
    let dr2 = layer_norm_backward(dy, &c.xhat2, &c.inv2, &l.ln2_g, &mut acc.ln2_g, &mut acc.ln2_b);
    acc.w2 += &c.g.t().dot(&dr2);
    acc.b2 += &dr2.sum_axis(Axis(0));
    let mut du = dr2.dot(&l.w2.t());
    du.zip_mut_with(&c.u, |d, &u| *d = *d * gelu_grad(u));
    acc.w1 += &c.h1.t().dot(&du);
    acc.b1 += &du.sum_axis(Axis(0));
    let dh1 = dr2 + du.dot(&l.w1.t());
    let dr1 = layer_norm_backward(&dh1, &c.xhat1, &c.inv1, &l.ln1_g, &mut acc.ln1_g, &mut acc.ln1_b);
    acc.wo += &c.z.t().dot(&dr1);
    acc.bo += &dr1.sum_axis(Axis(0));
    let dz = dr1.dot(&l.wo.t());
    let dattn = dz.dot(&c.v.t());
    let dv = c.attn.t().dot(&dz);
    let mut ds = Array2::zeros(dattn.raw_dim());
    for r in 0..ds.nrows() {
        let row = softmax_backward(c.attn.row(r), dattn.row(r));
        ds.row_mut(r).assign(&(row * scale));
    }
    let dq = ds.dot(&c.k);
    let dk = ds.t().dot(&c.q);
    let mut dx = dr1;
    for (d, w, dw, db) in [
        (&dq, &l.wq, &mut acc.wq, &mut acc.bq),
        (&dk, &l.wk, &mut acc.wk, &mut acc.bk),
        (&dv, &l.wv, &mut acc.wv, &mut acc.bv),
    ] {
        *dw += &c.x.t().dot(d);
        *db += &d.sum_axis(Axis(0));
        dx += &d.dot(&w.t());
    }
    dx
}

fn check_inputs<F: Scalar>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    ids: &[usize],
    sample: &Sample,
) -> Result<(), ModelError> {
    let n = sample.len();
    let shape = |msg: String| Err(ModelError::Shape(msg));
    if ids.len() != n + 1 {
        return shape(format!("{} ids for {} tokens plus <CLS>", ids.len(), n));
    }
    if n == 0 || n > config.max_len {
        return shape(format!("sample length {n} outside 1..={}", config.max_len));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= params.tok_emb.nrows()) {
        return shape(format!("token id {bad} outside vocabulary of {}", params.tok_emb.nrows()));
    }
    if sample.kind != config.kind {
        return shape(format!("{} sample for a {} model", sample.kind, config.kind));
    }
    let rep_len = if config.kind == BugKind::WrongBinop { BINOP_VOCAB.len() } else { n };
    if sample.loc_mask.len() != n || sample.rep_mask.len() != rep_len {
        return shape("mask lengths do not match the sample".into());
    }
    Ok(())
}

/// Runs the encoder and the three heads on `ids` (`<CLS>` first) with the
/// sample's candidate masks.
pub fn forward_cached<F: Scalar>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    ids: &[usize],
    sample: &Sample,
) -> Result<(Prediction<F>, ForwardCache<F>), ModelError> {
    check_inputs(params, config, ids, sample)?;
    let rows = ids.len();
    let mut x = params.pos_emb.slice(s![..rows, ..]).to_owned();
    for (r, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(r);
        row += &params.tok_emb.row(id);
    }
    let mut hidden = vec![x.clone()];
    let mut layers = Vec::with_capacity(params.layers.len());
    for l in &params.layers {
        let (out, cache) = layer_forward(l, x);
        hidden.push(out.clone());
        layers.push(cache);
        x = out;
    }
    let k = params.layers.len();
    let cls_layer = config.heads_order.layer_for(Task::Cls, k);
    let loc_layer = config.heads_order.layer_for(Task::Loc, k);
    let rep_layer = config.heads_order.layer_for(Task::Rep, k);

    let h_cls = hidden[cls_layer].row(0).to_owned();
    let cls_hidden = (h_cls.dot(&params.cls_w1) + &params.cls_b1).mapv(F::tanh);
    let logits = cls_hidden.dot(&params.cls_w2) + &params.cls_b2;
    let p = masked_softmax(logits.as_slice().expect("contiguous"), &[true, true])?;
    let p_cls = [p[0], p[1]];

    let program = hidden[loc_layer].slice(s![1.., ..]);
    let loc_scores = program.dot(&params.loc_w) + params.loc_b[0];
    let p_loc = masked_softmax(loc_scores.as_slice().expect("contiguous"), &sample.loc_mask)?;

    let (p_rep, rep_hidden) = match &params.rep {
        RepHead::Pointer { w, b } => {
            let scores = hidden[rep_layer].slice(s![1.., ..]).dot(w) + b[0];
            (masked_softmax(scores.as_slice().expect("contiguous"), &sample.rep_mask)?, None)
        }
        RepHead::Operator { w1, b1, w2, b2 } => {
            let a = (hidden[rep_layer].row(0).dot(w1) + b1).mapv(F::tanh);
            let scores = a.dot(w2) + b2;
            (masked_softmax(scores.as_slice().expect("contiguous"), &sample.rep_mask)?, Some(a))
        }
    };
    let pred = Prediction { p_cls, p_loc, p_rep, h_cls };
    let cache = ForwardCache {
        ids: ids.to_vec(),
        hidden,
        layers,
        cls_hidden,
        rep_hidden,
        cls_layer,
        loc_layer,
        rep_layer,
    };
    Ok((pred, cache))
}

pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    ids: &[usize],
    sample: &Sample,
) -> Result<Prediction<F>, ModelError> {
    forward_cached(params, config, ids, sample).map(|(p, _)| p)
}

/// Back-propagates `grads` through the heads and the encoder, adding the
/// parameter gradients to `acc`.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    pred: &Prediction<F>,
    cache: &ForwardCache<F>,
    grads: &OutputGrads<F>,
    acc: &mut ModelParams<F>,
) {
    let mut dh: Vec<Array2<F>> = cache.hidden.iter().map(|h| Array2::zeros(h.raw_dim())).collect();

    let p_cls = Array1::from(pred.p_cls.to_vec());
    let dlogits = softmax_backward(p_cls.view(), ArrayView1::from(&grads.d_p_cls[..]));
    acc.cls_b2 += &dlogits;
    acc.cls_w2 += &outer(cache.cls_hidden.view(), dlogits.view());
    let mut dpre = params.cls_w2.dot(&dlogits);
    dpre.zip_mut_with(&cache.cls_hidden, |d, &a| *d = *d * (F::one() - a * a));
    acc.cls_b1 += &dpre;
    acc.cls_w1 += &outer(pred.h_cls.view(), dpre.view());
    let dfeat = params.cls_w1.dot(&dpre) + &grads.d_h_cls;
    {
        let mut row = dh[cache.cls_layer].row_mut(0);
        row += &dfeat;
    }

    let ds = softmax_backward(pred.p_loc.view(), grads.d_p_loc.view());
    let program = cache.hidden[cache.loc_layer].slice(s![1.., ..]);
    acc.loc_w += &program.t().dot(&ds);
    acc.loc_b[0] += ds.sum();
    {
        let mut d = dh[cache.loc_layer].slice_mut(s![1.., ..]);
        d += &outer(ds.view(), params.loc_w.view());
    }

    let ds = softmax_backward(pred.p_rep.view(), grads.d_p_rep.view());
    match (&params.rep, &mut acc.rep) {
        (RepHead::Pointer { w, .. }, RepHead::Pointer { w: gw, b: gb }) => {
            let program = cache.hidden[cache.rep_layer].slice(s![1.., ..]);
            *gw += &program.t().dot(&ds);
            gb[0] += ds.sum();
            let mut d = dh[cache.rep_layer].slice_mut(s![1.., ..]);
            d += &outer(ds.view(), w.view());
        }
        (RepHead::Operator { w1, w2, .. }, RepHead::Operator { w1: gw1, b1: gb1, w2: gw2, b2: gb2 }) => {
            let a = cache.rep_hidden.as_ref().expect("operator head caches its hidden layer");
            *gb2 += &ds;
            *gw2 += &outer(a.view(), ds.view());
            let mut dpre = w2.dot(&ds);
            dpre.zip_mut_with(a, |d, &a| *d = *d * (F::one() - a * a));
            *gb1 += &dpre;
            let feat = cache.hidden[cache.rep_layer].row(0);
            *gw1 += &outer(feat, dpre.view());
            let mut row = dh[cache.rep_layer].row_mut(0);
            row += &w1.dot(&dpre);
        }
        _ => unreachable!("gradient accumulator shaped like the parameters"),
    }

    for i in (0..params.layers.len()).rev() {
        let dx = layer_backward(&params.layers[i], &cache.layers[i], &dh[i + 1], &mut acc.layers[i]);
        dh[i] += &dx;
    }
    for (r, &id) in cache.ids.iter().enumerate() {
        let d = dh[0].row(r);
        let mut t = acc.tok_emb.row_mut(id);
        t += &d;
        let mut p = acc.pos_emb.row_mut(r);
        p += &d;
    }
}
