use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::sample::{Origin, Sample, SampleMeta, SampleSkip};
use super::split::{read_split, split_by_repo, write_split, DatasetSplit, DatasetStats, RepoSamples, SplitName};
use super::CorpusError;
use crate::mutate::{extract_real_bug, inject, Provenance, RealBug};
use crate::rng::{rng_for, STREAM_INJECT, STREAM_SPLIT};
use crate::syntax::{candidates_for, function_units, is_eligible, lex, BugKind, FunctionUnit, TokenStream};

pub const FIXES_FILE: &str = "fixes.jsonl";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    /// Path relative to the repository root, `/`-separated.
    pub path: String,
    pub text: String,
}

/// One exported bug-fixing change: a file before and after a commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixRecord {
    pub commit: String,
    pub file: String,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Repo {
    pub name: String,
    pub files: Vec<SourceFile>,
    pub fixes: Vec<FixRecord>,
}

/// A directory of repositories: `<root>/<repo>/**/*.py`, plus an optional
/// `<root>/<repo>/fixes.jsonl` of [`FixRecord`]s.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub repos: Vec<Repo>,
}

impl Corpus {
    pub fn load_dir(root: &Path) -> Result<Corpus, CorpusError> {
        let mut names = Vec::new();
        for entry in fs::read_dir(root).map_err(|e| CorpusError::io(root, e))? {
            let entry = entry.map_err(|e| CorpusError::io(root, e))?;
            if entry.path().is_dir() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        let mut repos = Vec::new();
        for name in names {
            let dir = root.join(&name);
            let mut files = Vec::new();
            for entry in WalkDir::new(&dir).sort_by_file_name() {
                let entry = entry.map_err(|e| CorpusError::Io {
                    path: dir.display().to_string(),
                    source: e.into(),
                })?;
                let p = entry.path();
                if !entry.file_type().is_file() || p.extension().is_none_or(|e| e != "py") {
                    continue;
                }
                let rel = p.strip_prefix(&dir).expect("walk stays under root");
                let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                match fs::read_to_string(p) {
                    Ok(text) => files.push(SourceFile { path: rel, text }),
                    Err(e) => warn!("skipping {}: {e}", p.display()),
                }
            }
            let fixes_path = dir.join(FIXES_FILE);
            let mut fixes = Vec::new();
            if fixes_path.is_file() {
                let text = fs::read_to_string(&fixes_path).map_err(|e| CorpusError::io(&fixes_path, e))?;
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec = serde_json::from_str(line).map_err(|e| CorpusError::Format {
                        path: fixes_path.display().to_string(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                    fixes.push(rec);
                }
            }
            repos.push(Repo { name, files, fixes });
        }
        Ok(Corpus { repos })
    }

    pub fn write_dir(&self, root: &Path) -> Result<(), CorpusError> {
        for repo in &self.repos {
            let dir = root.join(&repo.name);
            for f in &repo.files {
                let p = dir.join(&f.path);
                if let Some(parent) = p.parent() {
                    fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
                }
                fs::write(&p, &f.text).map_err(|e| CorpusError::io(&p, e))?;
            }
            if !repo.fixes.is_empty() {
                fs::create_dir_all(&dir).map_err(|e| CorpusError::io(&dir, e))?;
                let p = dir.join(FIXES_FILE);
                let mut out = String::new();
                for fix in &repo.fixes {
                    out.push_str(&serde_json::to_string(fix).expect("fix serializes"));
                    out.push('\n');
                }
                fs::write(&p, out).map_err(|e| CorpusError::io(&p, e))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SourceFunction {
    pub repo: String,
    pub file: String,
    pub unit: FunctionUnit,
}

impl SourceFunction {
    fn meta(&self, origin: Origin) -> SampleMeta {
        SampleMeta { repo: self.repo.clone(), file: self.file.clone(), function: self.unit.qualname.clone(), origin }
    }
}

#[derive(Debug, Clone)]
pub struct MinedBug {
    pub function: String,
    pub bug: RealBug,
}

/// Counters for everything the build skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub lex_failures: usize,
    pub unsupported: usize,
    pub ineligible: usize,
    pub too_long: usize,
    pub duplicates: usize,
    pub real_bugs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub max_len: usize,
    pub seed: u64,
    pub ratios: (f64, f64, f64),
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { max_len: 512, seed: 0, ratios: (0.5, 0.25, 0.25) }
    }
}

fn lex_units(text: &str) -> Option<Vec<FunctionUnit>> {
    lex(text).ok().map(|ts| function_units(&ts))
}

/// All function units of a repository's current files.
pub fn functions_of(repo: &Repo, report: &mut BuildReport) -> Vec<SourceFunction> {
    let mut out = Vec::new();
    for f in &repo.files {
        let Some(units) = lex_units(&f.text) else {
            debug!("{}/{}: lex failure", repo.name, f.path);
            report.lex_failures += 1;
            continue;
        };
        out.extend(units.into_iter().map(|unit| SourceFunction { repo: repo.name.clone(), file: f.path.clone(), unit }));
    }
    out
}

/// Real bugs of `kind` found in a repository's fix history. Functions are
/// paired across versions by qualified name.
pub fn mine_real_bugs(repo: &Repo, kind: BugKind) -> Vec<MinedBug> {
    let mut out = Vec::new();
    for fix in &repo.fixes {
        let (Some(before), Some(after)) = (lex_units(&fix.before), lex_units(&fix.after)) else {
            continue;
        };
        let mut after_by_name: HashMap<&str, Option<&FunctionUnit>> = HashMap::new();
        for u in &after {
            after_by_name.entry(&u.qualname).and_modify(|e| *e = None).or_insert(Some(u));
        }
        let before_names: Vec<&str> = before.iter().map(|u| u.qualname.as_str()).collect();
        for b in &before {
            if before_names.iter().filter(|&&n| n == b.qualname).count() > 1 || b.decorated_with_args {
                continue;
            }
            let Some(Some(a)) = after_by_name.get(b.qualname.as_str()) else { continue };
            if a.decorated_with_args || b.tokens.same_text(&a.tokens) {
                continue;
            }
            if let Some(bug) = extract_real_bug(&b.tokens, &a.tokens, kind) {
                let provenance = Provenance { repo: repo.name.clone(), file: fix.file.clone(), commit: fix.commit.clone() };
                out.push(MinedBug { function: b.qualname.clone(), bug: bug.with_provenance(provenance) });
            }
        }
    }
    out
}

fn note_skip(report: &mut BuildReport, skip: SampleSkip) {
    match skip {
        SampleSkip::BugBeyondLength => report.too_long += 1,
        SampleSkip::NoLocation | SampleSkip::NoRepair => report.ineligible += 1,
    }
}

/// Candidates for a function, or `None` (counted) if it cannot be used.
fn usable(tokens: &TokenStream, unit: Option<&FunctionUnit>, kind: BugKind, report: &mut BuildReport) -> Option<crate::syntax::CandidateMap> {
    if unit.is_some_and(|u| u.decorated_with_args) {
        report.unsupported += 1;
        return None;
    }
    match candidates_for(tokens, kind) {
        Err(e) => {
            debug!("unsupported function: {e}");
            report.unsupported += 1;
            None
        }
        Ok(c) if !is_eligible(&c) => {
            report.ineligible += 1;
            None
        }
        Ok(c) => Some(c),
    }
}

/// The balanced synthetic split: for each eligible function, its correct
/// version followed by one injected bug.
pub fn build_syn_train<R: Rng + ?Sized>(
    functions: &[SourceFunction],
    kind: BugKind,
    max_len: usize,
    rng: &mut R,
    report: &mut BuildReport,
) -> DatasetSplit {
    let mut samples = Vec::new();
    for f in functions {
        let tokens = &f.unit.tokens;
        let Some(cands) = usable(tokens, Some(&f.unit), kind, report) else { continue };
        let Ok((buggy, edit)) = inject(tokens, &cands, rng) else {
            report.ineligible += 1;
            continue;
        };
        let Ok(buggy_cands) = candidates_for(&buggy, kind) else {
            report.unsupported += 1;
            continue;
        };
        let correct = Sample::build(tokens, &cands, None, max_len, f.meta(Origin::Nonbuggy));
        let bug = Sample::build(&buggy, &buggy_cands, Some(&edit), max_len, f.meta(Origin::Synthetic));
        match (correct, bug) {
            (Ok(c), Ok(b)) => {
                samples.push(c);
                samples.push(b);
            }
            (Err(e), _) | (_, Err(e)) => note_skip(report, e),
        }
    }
    if report.too_long > 0 {
        warn!("skipped {} functions whose bug falls beyond {max_len} tokens", report.too_long);
    }
    DatasetSplit::new(SplitName::SynTrain, kind, samples)
}

#[derive(Debug, Clone)]
pub struct BuiltDatasets {
    pub kind: BugKind,
    pub syn_train: DatasetSplit,
    pub real_train: DatasetSplit,
    pub real_val: DatasetSplit,
    pub real_test: DatasetSplit,
    pub report: BuildReport,
}

impl BuiltDatasets {
    pub fn splits(&self) -> [&DatasetSplit; 4] {
        [&self.syn_train, &self.real_train, &self.real_val, &self.real_test]
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats { kind: self.kind, splits: self.splits().iter().map(|s| (s.name, s.stats())).collect() }
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        for split in self.splits() {
            write_split(&dir.join(split.name.file_name()), split)?;
        }
        let p = dir.join(STATS_FILE);
        let stats = serde_json::to_string_pretty(&self.stats()).expect("stats serialize");
        fs::write(&p, stats + "\n").map_err(|e| CorpusError::io(&p, e))
    }

    pub fn read_dir(dir: &Path) -> Result<BuiltDatasets, CorpusError> {
        let p = dir.join(STATS_FILE);
        let text = fs::read_to_string(&p).map_err(|e| CorpusError::io(&p, e))?;
        let stats: DatasetStats = serde_json::from_str(&text).map_err(|e| CorpusError::Format {
            path: p.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let read = |name: SplitName| read_split(&dir.join(name.file_name()), name, stats.kind);
        Ok(BuiltDatasets {
            kind: stats.kind,
            syn_train: read(SplitName::SynTrain)?,
            real_train: read(SplitName::RealTrain)?,
            real_val: read(SplitName::RealVal)?,
            real_test: read(SplitName::RealTest)?,
            report: BuildReport::default(),
        })
    }
}

/// The whole pipeline: mine real bugs, route repositories with real bugs to
/// the real splits and the rest to syn-train, and deduplicate throughout.
///
/// Deduplication runs first over functions (mined bugs, then functions of
/// real-bug repositories, then the rest) and again over the finished splits
/// in the order real-test, real-val, real-train, syn-train. A syn-train pair
/// is dropped as a unit.
pub fn build_datasets(corpus: &Corpus, kind: BugKind, opts: &BuildOptions) -> Result<BuiltDatasets, CorpusError> {
    let mut report = BuildReport::default();
    let mut repos: Vec<&Repo> = corpus.repos.iter().collect();
    repos.sort_by(|a, b| a.name.cmp(&b.name));

    let mut real = Vec::new();
    let mut synthetic = Vec::new();
    for repo in repos {
        let mined = mine_real_bugs(repo, kind);
        let functions = functions_of(repo, &mut report);
        if mined.is_empty() {
            synthetic.push(functions);
        } else {
            report.real_bugs += mined.len();
            real.push((repo.name.clone(), mined, functions));
        }
    }

    let mut seen = HashSet::new();
    let mut fresh = |tokens: &TokenStream, report: &mut BuildReport| {
        let new = seen.insert(super::sample::token_hash(&tokens.texts()));
        if !new {
            report.duplicates += 1;
        }
        new
    };
    for (_, mined, _) in &mut real {
        mined.retain(|m| fresh(&m.bug.buggy_tokens, &mut report));
    }
    for (_, _, functions) in &mut real {
        functions.retain(|f| fresh(&f.unit.tokens, &mut report));
    }
    for functions in &mut synthetic {
        functions.retain(|f| fresh(&f.unit.tokens, &mut report));
    }

    let mut repo_samples = Vec::new();
    for (name, mined, functions) in real {
        let mut rs = RepoSamples { repo: name.clone(), ..Default::default() };
        for m in mined {
            let Some(cands) = usable(&m.bug.buggy_tokens, None, kind, &mut report) else { continue };
            let meta = SampleMeta {
                repo: name.clone(),
                file: m.bug.provenance.file.clone(),
                function: m.function.clone(),
                origin: Origin::Real,
            };
            match Sample::build(&m.bug.buggy_tokens, &cands, Some(&m.bug.edit), opts.max_len, meta) {
                Ok(s) => rs.buggy.push(s),
                Err(e) => note_skip(&mut report, e),
            }
        }
        for f in functions {
            let Some(cands) = usable(&f.unit.tokens, Some(&f.unit), kind, &mut report) else { continue };
            match Sample::build(&f.unit.tokens, &cands, None, opts.max_len, f.meta(Origin::Nonbuggy)) {
                Ok(s) => rs.nonbuggy.push(s),
                Err(e) => note_skip(&mut report, e),
            }
        }
        repo_samples.push(rs);
    }

    let syn_functions: Vec<SourceFunction> = synthetic.into_iter().flatten().collect();
    let mut syn_train =
        build_syn_train(&syn_functions, kind, opts.max_len, &mut rng_for(opts.seed, STREAM_INJECT), &mut report);

    let real_total: usize = repo_samples.iter().map(|r| r.buggy.len() + r.nonbuggy.len()).sum();
    if syn_train.is_empty() && real_total == 0 {
        return Err(CorpusError::NoEligibleFunctions);
    }
    let [mut real_train, mut real_val, mut real_test] =
        split_by_repo(repo_samples, kind, opts.ratios, &mut rng_for(opts.seed, STREAM_SPLIT))?;

    let mut seen = HashSet::new();
    for split in [&mut real_test, &mut real_val, &mut real_train] {
        let before = split.samples.len();
        split.samples.retain(|s| seen.insert(s.token_hash()));
        report.duplicates += before - split.samples.len();
    }
    let before = syn_train.samples.len();
    let mut kept = Vec::with_capacity(before);
    let mut it = std::mem::take(&mut syn_train.samples).into_iter();
    while let (Some(a), Some(b)) = (it.next(), it.next()) {
        let (ha, hb) = (a.token_hash(), b.token_hash());
        if ha != hb && !seen.contains(&ha) && !seen.contains(&hb) {
            seen.insert(ha);
            seen.insert(hb);
            kept.push(a);
            kept.push(b);
        }
    }
    syn_train.samples = kept;
    report.duplicates += before - syn_train.samples.len();

    Ok(BuiltDatasets { kind, syn_train, real_train, real_val, real_test, report })
}
