use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use driftlab::corpus::{token_hash, Origin, Sample, SampleMeta};
use driftlab::model::{load_checkpoint, Model};
use driftlab::syntax::{candidates_for, function_units, lex, BugKind, BINOP_VOCAB};
use driftlab::Scalar;
use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;
use walkdir::WalkDir;

use crate::{Precision, ScanArgs, UsageError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub repo: String,
    pub file: String,
    pub function: String,
    pub kind: BugKind,
    pub loc: String,
    pub line: usize,
    pub start: usize,
    pub end: usize,
    pub repair: String,
    pub score: f64,
    #[serde(skip)]
    key: ([u8; 32], usize),
}

struct Source {
    repo: String,
    file: String,
    path: PathBuf,
}

fn sources(root: &Path) -> Result<Vec<Source>> {
    let root_name = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", root.display()))?;
        let p = entry.path();
        if !entry.file_type().is_file() || p.extension().is_none_or(|e| e != "py") {
            continue;
        }
        let parts: Vec<String> = p
            .strip_prefix(root)
            .expect("walk stays under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect();
        let (repo, file) = match parts.split_first() {
            Some((first, rest)) if !rest.is_empty() => (first.clone(), rest.join("/")),
            _ => (root_name.clone(), parts.join("/")),
        };
        out.push(Source { repo, file, path: p.to_path_buf() });
    }
    Ok(out)
}

fn scan_file<F: Scalar>(model: &Model<F>, src: &Source, threshold: f64) -> Vec<Warning> {
    let text = match fs::read_to_string(&src.path) {
        Ok(t) => t,
        Err(e) => {
            warn!("skipping {}: {e}", src.path.display());
            return Vec::new();
        }
    };
    let tokens = match lex(&text) {
        Ok(t) => t,
        Err(e) => {
            warn!("skipping {}: {e}", src.path.display());
            return Vec::new();
        }
    };
    let kind = model.config.kind;
    let mut out = Vec::new();
    for unit in function_units(&tokens) {
        if unit.decorated_with_args {
            continue;
        }
        let cands = match candidates_for(&unit.tokens, kind) {
            Ok(c) => c,
            Err(e) => {
                debug!("{}:{}: {e}", src.file, unit.qualname);
                continue;
            }
        };
        let meta = SampleMeta { repo: src.repo.clone(), file: src.file.clone(), function: unit.qualname.clone(), origin: Origin::Nonbuggy };
        let Ok(sample) = Sample::build(&unit.tokens, &cands, None, model.config.max_len, meta) else {
            continue;
        };
        let pred = match model.predict(&sample) {
            Ok(p) => p,
            Err(e) => {
                warn!("{}:{}: {e}", src.file, unit.qualname);
                continue;
            }
        };
        let score = pred.p_buggy().to_f64().unwrap_or(0.0);
        if !(score >= threshold) {
            continue;
        }
        let loc = argmax(pred.p_loc.iter().map(|p| p.to_f64().unwrap_or(0.0)));
        let rep = argmax(pred.p_rep.iter().map(|p| p.to_f64().unwrap_or(0.0)));
        let tok = &unit.tokens[loc];
        let repair = match kind {
            BugKind::WrongBinop => BINOP_VOCAB[rep].to_string(),
            _ => unit.tokens[rep].text.clone(),
        };
        out.push(Warning {
            repo: src.repo.clone(),
            file: src.file.clone(),
            function: unit.qualname.clone(),
            kind,
            loc: tok.text.clone(),
            line: text[..tok.span.start].matches('\n').count() + 1,
            start: tok.span.start,
            end: tok.span.end,
            repair,
            score,
            key: (token_hash(&sample.tokens), loc),
        });
    }
    out
}

fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Warnings above `threshold`, highest score first, one per distinct
/// (function tokens, location) pair.
pub fn scan_dir<F: Scalar>(model: &Model<F>, root: &Path, threshold: f64) -> Result<Vec<Warning>> {
    let files = sources(root)?;
    let mut all: Vec<Warning> = files.par_iter().flat_map_iter(|s| scan_file(model, s, threshold)).collect();
    all.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (&a.repo, &a.file, &a.function, a.start).cmp(&(&b.repo, &b.file, &b.function, b.start)))
    });
    let mut seen = HashSet::new();
    all.retain(|w| seen.insert(w.key));
    Ok(all)
}

fn run<F: Scalar>(a: &ScanArgs) -> Result<Vec<Warning>> {
    let model = load_checkpoint::<F>(&a.checkpoint)?;
    if let Some(k) = a.kind {
        if k != model.config.kind {
            return Err(UsageError(format!("--kind {k} does not match the checkpoint ({})", model.config.kind)).into());
        }
    }
    scan_dir(&model, &a.source, a.threshold)
}

pub fn scan(a: ScanArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(UsageError("--threshold must lie in [0, 1]".into()).into());
    }
    if !a.source.is_dir() {
        return Err(anyhow::anyhow!("{} is not a directory", a.source.display()));
    }
    let warnings = match a.precision {
        Precision::F32 => run::<f32>(&a)?,
        Precision::F64 => run::<f64>(&a)?,
    };
    let mut text = String::new();
    for w in &warnings {
        text.push_str(&serde_json::to_string(w)?);
        text.push('\n');
    }
    match &a.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => match io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}
