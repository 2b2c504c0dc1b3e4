use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use driftlab::corpus::{build_datasets, BuildOptions, BuiltDatasets, Corpus, DatasetSplit, SplitName};
use driftlab::eval::{evaluate, EvalReport};
use driftlab::model::load_checkpoint;
use driftlab::toy::{generate, ToyConfig};
use driftlab::Scalar;
use log::info;

use crate::{BuildArgs, EvalArgs, Precision, ToyArgs, UsageError};

pub fn toy_corpus(a: ToyArgs) -> Result<()> {
    let mut cfg = ToyConfig {
        seed: a.seed.seed,
        syn_repos: a.syn_repos,
        real_repos: a.real_repos,
        syn_functions: a.syn_functions,
        real_functions: a.real_functions,
        bugs_per_repo: a.bugs_per_repo,
        variant_rate: a.variant_rate,
        ..ToyConfig::default()
    };
    if !a.kinds.is_empty() {
        cfg.kinds = a.kinds;
    }
    if !(0.0..=1.0).contains(&cfg.variant_rate) {
        return Err(UsageError("--variant-rate must lie in [0, 1]".into()).into());
    }
    let corpus = generate(&cfg);
    corpus.write_dir(&a.out)?;
    let fixes: usize = corpus.repos.iter().map(|r| r.fixes.len()).sum();
    println!("wrote {} repositories ({fixes} fix commits) to {}", corpus.repos.len(), a.out.display());
    Ok(())
}

pub fn build(a: BuildArgs) -> Result<()> {
    let corpus = Corpus::load_dir(&a.corpus)?;
    let opts = BuildOptions { max_len: a.max_len, seed: a.seed.seed, ..BuildOptions::default() };
    let built = build_datasets(&corpus, a.kind, &opts)?;
    built.write_dir(&a.out)?;
    info!("build report: {:?}", built.report);
    print!("{}", built.stats());
    Ok(())
}

pub fn read_split(dir: &Path, name: SplitName) -> Result<DatasetSplit> {
    let built = BuiltDatasets::read_dir(dir).with_context(|| format!("reading datasets in {}", dir.display()))?;
    Ok(match name {
        SplitName::SynTrain => built.syn_train,
        SplitName::RealTrain => built.real_train,
        SplitName::RealVal => built.real_val,
        SplitName::RealTest => built.real_test,
    })
}

fn eval_with<F: Scalar>(a: &EvalArgs, split: &DatasetSplit) -> Result<EvalReport> {
    let model = load_checkpoint::<F>(&a.checkpoint)?;
    if model.config.kind != split.kind {
        return Err(UsageError(format!("checkpoint is for {}, dataset is {}", model.config.kind, split.kind)).into());
    }
    Ok(evaluate(&model, split, a.threshold)?)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(UsageError("--threshold must lie in [0, 1]".into()).into());
    }
    let split = read_split(&a.data, a.split)?;
    let report = match a.precision {
        Precision::F32 => eval_with::<f32>(&a, &split)?,
        Precision::F64 => eval_with::<f64>(&a, &split)?,
    };
    print!("{report}");
    if let Some(p) = &a.out {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.plot {
        fs::write(p, report.plot_data()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
