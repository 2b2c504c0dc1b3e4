use std::fmt::Write as _;
use std::fs;

use anyhow::{Context, Result};
use driftlab::corpus::{subsample_fraction, subsample_ratio, BuiltDatasets, DatasetSplit};
use driftlab::learn::{train_two_phase_from, EpochLog, TrainConfig};
use driftlab::model::{default_beta, load_checkpoint, save_checkpoint, Model, ModelConfig, Vocab};
use driftlab::rng::{rng_for, STREAM_INIT, STREAM_SUBSAMPLE};
use driftlab::Scalar;
use log::warn;

use crate::{PhaseArg, Precision, TrainArgs, UsageError};

fn check_percent(p: Option<f64>, flag: &str) -> Result<()> {
    if p.is_some_and(|p| !(p > 0.0 && p <= 100.0)) {
        return Err(UsageError(format!("{flag} must lie in (0, 100]")).into());
    }
    Ok(())
}

fn model_config(a: &TrainArgs, kind: driftlab::syntax::BugKind) -> ModelConfig {
    let mut c = ModelConfig::new(kind);
    c.dim = a.dim;
    c.layers = a.layers;
    c.max_len = a.max_len;
    c.beta = a.beta.unwrap_or_else(|| default_beta(kind));
    if let Some(g) = a.gamma {
        c.gamma = g;
    }
    if let Some(o) = a.order {
        c.heads_order = o;
    }
    c.log_pointer_loss = a.log_pointer_loss;
    c
}

fn log_line(out: &mut String, e: &EpochLog) {
    let l = &e.loss;
    let _ = write!(
        out,
        "epoch={} steps={} l_cls={} l_loc={} l_rep={} l_contrastive={} total={}",
        e.epoch, e.steps, l.l_cls, l.l_loc, l.l_rep, l.l_contrastive, l.total
    );
    if let Some(ap) = e.val_ap {
        let _ = write!(out, " val_ap={ap}");
    }
    out.push('\n');
}

fn run<F: Scalar>(a: &TrainArgs, syn: &DatasetSplit, real: &DatasetSplit, val: &DatasetSplit, tc: &TrainConfig) -> Result<String> {
    let model: Model<F> = match &a.init {
        Some(p) => {
            let mut m = load_checkpoint::<F>(p)?;
            if m.config.kind != syn.kind {
                return Err(UsageError(format!("--init checkpoint is for {}, datasets are {}", m.config.kind, syn.kind)).into());
            }
            if a.beta.is_some() {
                m.config.beta = model_config(a, syn.kind).beta;
            }
            if let Some(g) = a.gamma {
                m.config.gamma = g;
            }
            m.config.log_pointer_loss |= a.log_pointer_loss;
            m
        }
        None => {
            if a.phase == PhaseArg::Two {
                warn!("phase 2 without --init starts from a fresh model");
            }
            let texts = syn.samples.iter().chain(&real.samples).flat_map(|s| s.tokens.iter().map(String::as_str));
            let vocab = Vocab::build(texts, 1);
            Model::new(model_config(a, syn.kind), vocab, &mut rng_for(a.seed.seed, STREAM_INIT))?
        }
    };
    let mut log = String::new();
    let _ = writeln!(log, "# kind={} seed={} phase={:?}", syn.kind, a.seed.seed, a.phase);
    let mut section = 0;
    let outcome = train_two_phase_from(model, syn, real, val, tc, |e| {
        if e.phase != section {
            section = e.phase;
            let _ = writeln!(log, "[phase {}]", e.phase);
        }
        log_line(&mut log, e);
    })?;
    match outcome.best_epoch {
        Some(e) => {
            let _ = writeln!(log, "best_epoch={e}");
        }
        None => log.push_str("best_epoch=none\n"),
    }
    save_checkpoint(&a.out, &outcome.model)?;
    Ok(log)
}

pub fn train(a: TrainArgs) -> Result<()> {
    check_percent(a.percent_syn, "--percent-syn")?;
    check_percent(a.percent_real, "--percent-real")?;
    if a.batch_size == 0 || !(a.lr > 0.0) {
        return Err(UsageError("--batch-size and --lr must be positive".into()).into());
    }
    if a.ratio.is_some_and(|r| !(r > 0.0)) {
        return Err(UsageError("--ratio must be positive".into()).into());
    }
    let data = BuiltDatasets::read_dir(&a.data).with_context(|| format!("reading datasets in {}", a.data.display()))?;
    let mut rng = rng_for(a.seed.seed, STREAM_SUBSAMPLE);
    let mut syn = data.syn_train;
    if let Some(p) = a.percent_syn {
        syn = subsample_fraction(&syn, p, &mut rng)?;
    }
    let mut real = data.real_train;
    if let Some(p) = a.percent_real {
        real = subsample_fraction(&real, p, &mut rng)?;
    }
    if let Some(r) = a.ratio {
        real = subsample_ratio(&real, r, &mut rng)?;
    }
    let tc = TrainConfig {
        phase1_epochs: if a.phase == PhaseArg::Two { 0 } else { a.epochs1 },
        phase2_epochs: if a.phase == PhaseArg::One { 0 } else { a.epochs2 },
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed.seed,
        ..TrainConfig::default()
    };
    let log = match a.precision {
        Precision::F32 => run::<f32>(&a, &syn, &real, &data.real_val, &tc)?,
        Precision::F64 => run::<f64>(&a, &syn, &real, &data.real_val, &tc)?,
    };
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("log"));
    fs::write(&log_path, &log).with_context(|| format!("writing {}", log_path.display()))?;
    print!("{log}");
    Ok(())
}
