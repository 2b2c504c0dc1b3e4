use driftlab::corpus::{Origin, Sample, SampleMeta};
use driftlab::eval::{pr_curve_ap, precision_recall, Judgment, Scored, Target};
use driftlab::learn::{compute_loss, focal_loss, log_pointer_loss, pointer_loss, Phase};
use driftlab::model::{argmax, masked_softmax, HeadsOrder, Model, ModelConfig, Task, Vocab};
use driftlab::rng::{rng_for, STREAM_INIT};
use driftlab::syntax::{BugKind, BINOP_VOCAB};
use ndarray::Array1;
use proptest::prelude::*;
use rand::Rng;

const WORDS: [&str; 7] = ["def", "f", "x", "y", "+", "return", ":"];

fn sample(kind: BugKind, n: usize, buggy: bool, seed: u64) -> Sample {
    let mut rng = rng_for(seed, 0);
    let rep_len = if kind == BugKind::WrongBinop { BINOP_VOCAB.len() } else { n };
    let mut loc_mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let mut rep_mask: Vec<bool> = (0..rep_len).map(|_| rng.gen_bool(0.5)).collect();
    let (l, r) = (rng.gen_range(0..n), rng.gen_range(0..rep_len));
    loc_mask[l] = true;
    rep_mask[r] = true;
    let mut loc_target = vec![false; n];
    let mut rep_target = vec![false; rep_len];
    if buggy {
        loc_target[l] = true;
        rep_target[r] = true;
    }
    Sample {
        kind,
        tokens: (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect(),
        label: if buggy { 1 } else { -1 },
        loc_mask,
        loc_target,
        rep_mask,
        rep_target,
        meta: SampleMeta { repo: "r".into(), file: "f.py".into(), function: "f".into(), origin: Origin::Synthetic },
    }
}

fn model(kind: BugKind, order: HeadsOrder, beta: f64, seed: u64) -> Model<f64> {
    let config = ModelConfig { dim: 8, layers: 3, max_len: 16, heads_order: order, beta, ..ModelConfig::new(kind) };
    Model::new(config, Vocab::build(WORDS, 1), &mut rng_for(seed, STREAM_INIT)).unwrap()
}

fn kind_strategy() -> impl Strategy<Value = BugKind> {
    prop::sample::select(BugKind::ALL.to_vec())
}

fn order_strategy() -> impl Strategy<Value = HeadsOrder> {
    use Task::*;
    prop::sample::select(vec![
        HeadsOrder::Flat,
        HeadsOrder::Hierarchy([Cls, Loc, Rep]),
        HeadsOrder::Hierarchy([Rep, Loc, Cls]),
        HeadsOrder::Hierarchy([Loc, Cls, Rep]),
        HeadsOrder::Hierarchy([Loc, Rep, Cls]),
    ])
}

fn scored_strategy() -> impl Strategy<Value = Vec<Scored>> {
    prop::collection::vec((0u32..40, any::<bool>(), any::<bool>(), any::<bool>()), 1..60).prop_map(|v| {
        let mut out: Vec<Scored> =
            v.into_iter().map(|(s, buggy, loc_ok, rep_ok)| Scored { score: s as f64 / 40.0, buggy, loc_ok, rep_ok }).collect();
        out[0].buggy = true;
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn forward_normalizes_and_masks(kind in kind_strategy(), order in order_strategy(), n in 1usize..=16, buggy in any::<bool>(), seed in any::<u64>()) {
        let m = model(kind, order, 1.0, seed);
        let s = sample(kind, n, buggy, seed ^ 1);
        let p = m.predict(&s).unwrap();
        for (probs, mask) in [(&p.p_loc, &s.loc_mask), (&p.p_rep, &s.rep_mask)] {
            prop_assert!((probs.sum() - 1.0).abs() <= 1e-6);
            for (x, &keep) in probs.iter().zip(mask) {
                prop_assert!(keep || *x == 0.0);
            }
        }
        prop_assert!((p.p_cls[0] + p.p_cls[1] - 1.0).abs() <= 1e-6);
        prop_assert_eq!(m.predict(&s).unwrap(), p);
    }

    #[test]
    fn softmax_ignores_shifts_and_argmax_ignores_scaling(
        scores in prop::collection::vec(-20.0f64..20.0, 1..30),
        mask_bits in prop::collection::vec(any::<bool>(), 30),
        shift in -50.0f64..50.0,
        scale in 0.01f64..100.0,
    ) {
        let mut mask = mask_bits[..scores.len()].to_vec();
        mask[0] = true;
        let base = masked_softmax(&scores, &mask).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let moved = masked_softmax(&shifted, &mask).unwrap();
        for (a, b) in base.iter().zip(moved.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
        prop_assert_eq!(argmax(&masked_softmax(&scaled, &mask).unwrap()), argmax(&base));
    }

    #[test]
    fn focal_loss_decreases_in_the_true_class_probability(a in 1e-6f64..1.0, b in 1e-6f64..1.0, gamma in 0.0f64..5.0, y in prop::sample::select(vec![1i8, -1])) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let at = |p: f64| if y == 1 { focal_loss([1.0 - p, p], y, gamma) } else { focal_loss([p, 1.0 - p], y, gamma) };
        prop_assert!(at(lo) >= at(hi));
    }

    #[test]
    fn pointer_loss_is_minus_the_target_mass(raw in prop::collection::vec(0.0f64..1.0, 1..20), bits in prop::collection::vec(any::<bool>(), 20)) {
        let total: f64 = raw.iter().sum::<f64>() + 1e-9;
        let p = Array1::from(raw.iter().map(|x| x / total).collect::<Vec<_>>());
        let c = &bits[..raw.len()];
        let l = pointer_loss(&p, c).unwrap();
        let set = c.iter().filter(|&&b| b).count() as f64;
        let mass: f64 = p.iter().zip(c).filter(|(_, &b)| b).map(|(x, _)| x).sum();
        prop_assert!((-set..=0.0).contains(&l));
        prop_assert!((l + mass).abs() <= 1e-12);
        prop_assert!(log_pointer_loss(&p, c).unwrap() >= 0.0);
    }

    #[test]
    fn zero_beta_removes_the_contrastive_term(kind in kind_strategy(), seed in any::<u64>(), n in 2usize..12) {
        let m = model(kind, HeadsOrder::default_for(kind), 0.0, seed);
        let (a, b) = (sample(kind, n, true, seed ^ 2), sample(kind, n + 1, false, seed ^ 3));
        let (pa, pb) = (m.predict(&a).unwrap(), m.predict(&b).unwrap());
        let one = compute_loss(&pa, Some(&pb), &a, Phase::One, &m.config).unwrap();
        let two = compute_loss(&pa, None, &a, Phase::Two, &m.config).unwrap();
        prop_assert!((one.total - two.total).abs() <= 1e-12);
    }

    #[test]
    fn judgments_respect_the_dependency_chain(parts in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()), 0..100)) {
        let js: Vec<Judgment> = parts.iter().map(|&(f, b, l, r)| Judgment::from_parts(f, b, l, r)).collect();
        let [c, cl, clr] = precision_recall(&js);
        prop_assert!(c.tp >= cl.tp && cl.tp >= clr.tp);
        prop_assert!(c.fp <= cl.fp && cl.fp <= clr.fp);
        prop_assert!(c.precision() >= cl.precision() && cl.precision() >= clr.precision());
    }

    #[test]
    fn ap_is_invariant_under_monotone_rescoring(scored in scored_strategy()) {
        let remapped: Vec<Scored> = scored.iter().map(|s| Scored { score: (3.0 * s.score).exp() - 7.0, ..*s }).collect();
        for t in Target::ALL {
            let (_, a) = pr_curve_ap(&scored, t).unwrap();
            let (_, b) = pr_curve_ap(&remapped, t).unwrap();
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn sweep_recall_never_decreases(scored in scored_strategy()) {
        for t in Target::ALL {
            let (curve, ap) = pr_curve_ap(&scored, t).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0].threshold > w[1].threshold && w[0].recall <= w[1].recall));
            prop_assert!((0.0..=100.0 + 1e-9).contains(&ap));
        }
    }
}
