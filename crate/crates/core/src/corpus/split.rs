use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sample::{Sample, SampleRecord};
use super::CorpusError;
use crate::syntax::BugKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitName {
    #[serde(rename = "syn-train")]
    SynTrain,
    #[serde(rename = "real-train")]
    RealTrain,
    #[serde(rename = "real-val")]
    RealVal,
    #[serde(rename = "real-test")]
    RealTest,
}

impl SplitName {
    pub const ALL: [SplitName; 4] = [SplitName::SynTrain, SplitName::RealTrain, SplitName::RealVal, SplitName::RealTest];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::SynTrain => "syn-train",
            SplitName::RealTrain => "real-train",
            SplitName::RealVal => "real-val",
            SplitName::RealTest => "real-test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown split {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub repos: usize,
    pub buggy: usize,
    pub nonbuggy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub kind: BugKind,
    pub samples: Vec<Sample>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, kind: BugKind, samples: Vec<Sample>) -> Self {
        DatasetSplit { name, kind, samples }
    }

    pub fn stats(&self) -> SplitStats {
        let repos: BTreeSet<&str> = self.samples.iter().map(|s| s.meta.repo.as_str()).collect();
        let buggy = self.samples.iter().filter(|s| s.is_buggy()).count();
        SplitStats { repos: repos.len(), buggy, nonbuggy: self.samples.len() - buggy }
    }

    pub fn repos(&self) -> BTreeSet<String> {
        self.samples.iter().map(|s| s.meta.repo.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Keeps the first sample of every distinct token sequence.
pub fn dedup(samples: Vec<Sample>) -> Vec<Sample> {
    let mut seen = HashSet::new();
    samples.into_iter().filter(|s| seen.insert(s.token_hash())).collect()
}

/// Per-repository material for the real splits.
#[derive(Debug, Clone, Default)]
pub struct RepoSamples {
    pub repo: String,
    pub buggy: Vec<Sample>,
    pub nonbuggy: Vec<Sample>,
}

/// Repository counts for (train, val, test). Val and test get their ratio
/// share rounded to nearest (halves round down) but at least one repository
/// each; train takes the remainder.
pub fn split_counts(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let total = ratios.0 + ratios.1 + ratios.2;
    let share = |r: f64| {
        let x = n as f64 * r / total;
        let c = if x - x.floor() > 0.5 { x.ceil() } else { x.floor() };
        (c as usize).max(1)
    };
    let val = share(ratios.1);
    let test = share(ratios.2);
    (n.saturating_sub(val + test), val, test)
}

/// Randomly partitions repositories into real-train, real-val and real-test.
pub fn split_by_repo<R: Rng + ?Sized>(
    mut repos: Vec<RepoSamples>,
    kind: BugKind,
    ratios: (f64, f64, f64),
    rng: &mut R,
) -> Result<[DatasetSplit; 3], CorpusError> {
    if repos.len() < 3 {
        return Err(CorpusError::TooFewRepos(repos.len()));
    }
    repos.sort_by(|a, b| a.repo.cmp(&b.repo));
    repos.shuffle(rng);
    let (n_train, n_val, _) = split_counts(repos.len(), ratios);
    let mut splits = [
        DatasetSplit::new(SplitName::RealTrain, kind, Vec::new()),
        DatasetSplit::new(SplitName::RealVal, kind, Vec::new()),
        DatasetSplit::new(SplitName::RealTest, kind, Vec::new()),
    ];
    for (i, r) in repos.into_iter().enumerate() {
        let which = if i < n_train {
            0
        } else if i < n_train + n_val {
            1
        } else {
            2
        };
        splits[which].samples.extend(r.buggy);
        splits[which].samples.extend(r.nonbuggy);
    }
    Ok(splits)
}

/// Keeps every buggy sample and `floor(ratio * buggy)` uniformly chosen
/// non-buggy ones, in their original order.
pub fn subsample_ratio<R: Rng + ?Sized>(split: &DatasetSplit, ratio: f64, rng: &mut R) -> Result<DatasetSplit, CorpusError> {
    if !(ratio >= 1.0) {
        return Err(CorpusError::InvalidArgument(format!("ratio must be at least 1, got {ratio}")));
    }
    let buggy = split.samples.iter().filter(|s| s.is_buggy()).count();
    if buggy == 0 {
        return Err(CorpusError::InvalidArgument("split has no buggy samples".into()));
    }
    let nonbuggy: Vec<usize> = (0..split.samples.len()).filter(|&i| !split.samples[i].is_buggy()).collect();
    let want = ((ratio * buggy as f64).floor() as usize).min(nonbuggy.len());
    let mut keep: BTreeSet<usize> = sample_indices(rng, nonbuggy.len(), want).into_iter().map(|j| nonbuggy[j]).collect();
    keep.extend((0..split.samples.len()).filter(|&i| split.samples[i].is_buggy()));
    let samples = keep.into_iter().map(|i| split.samples[i].clone()).collect();
    Ok(DatasetSplit::new(split.name, split.kind, samples))
}

/// Keeps the samples of `ceil(percent% of repos)` uniformly chosen
/// repositories.
pub fn subsample_fraction<R: Rng + ?Sized>(split: &DatasetSplit, percent: f64, rng: &mut R) -> Result<DatasetSplit, CorpusError> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(CorpusError::InvalidArgument(format!("percent must be in (0, 100], got {percent}")));
    }
    let repos: Vec<String> = split.repos().into_iter().collect();
    let want = ((repos.len() as f64 * percent / 100.0) - 1e-9).ceil().max(0.0) as usize;
    let want = want.min(repos.len());
    let chosen: BTreeSet<&str> = sample_indices(rng, repos.len(), want).into_iter().map(|i| repos[i].as_str()).collect();
    let samples = split.samples.iter().filter(|s| chosen.contains(s.meta.repo.as_str())).cloned().collect();
    Ok(DatasetSplit::new(split.name, split.kind, samples))
}

pub fn write_split(path: &Path, split: &DatasetSplit) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| CorpusError::io(path, e))?);
    for s in &split.samples {
        let line = serde_json::to_string(&SampleRecord::from(s)).expect("sample serializes");
        writeln!(w, "{line}").map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

/// Reads a split whose records must all be of `kind`.
pub fn read_split(path: &Path, name: SplitName, kind: BugKind) -> Result<DatasetSplit, CorpusError> {
    let r = BufReader::new(File::open(path).map_err(|e| CorpusError::io(path, e))?);
    let mut samples = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| CorpusError::Format { path: path.display().to_string(), line: i + 1, message };
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let s = Sample::try_from(rec).map_err(fail)?;
        if s.kind != kind {
            return Err(fail(format!("record kind {} where {} expected", s.kind, kind)));
        }
        samples.push(s);
    }
    Ok(DatasetSplit::new(name, kind, samples))
}

/// The sidecar statistics of a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub kind: BugKind,
    pub splits: BTreeMap<SplitName, SplitStats>,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>8}{:>10}{:>12}", self.kind.as_str(), "repos", "buggy", "non-buggy")?;
        for (name, s) in &self.splits {
            writeln!(f, "{:<12}{:>8}{:>10}{:>12}", name.as_str(), s.repos, s.buggy, s.nonbuggy)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sample::{Origin, SampleMeta};
    use crate::rng::rng_for;
    use crate::syntax::{candidates_for, lex};

    fn sample(repo: &str, body: &str, buggy: bool) -> Sample {
        let ts = lex(&format!("def f(a, b):\n    return a {body} b\n")).unwrap();
        let c = candidates_for(&ts, BugKind::WrongBinop).unwrap();
        let mut s = Sample::build(
            &ts,
            &c,
            None,
            512,
            SampleMeta { repo: repo.into(), file: "m.py".into(), function: "f".into(), origin: Origin::Nonbuggy },
        )
        .unwrap();
        if buggy {
            s.label = 1;
            let l = s.loc_mask.iter().position(|&b| b).unwrap();
            s.loc_target[l] = true;
            let r = s.rep_mask.iter().position(|&b| b).unwrap();
            s.rep_target[r] = true;
        }
        s
    }

    fn repo(name: &str, buggy: usize, nonbuggy: usize) -> RepoSamples {
        RepoSamples {
            repo: name.into(),
            buggy: (0..buggy).map(|_| sample(name, "+", true)).collect(),
            nonbuggy: (0..nonbuggy).map(|_| sample(name, "-", false)).collect(),
        }
    }

    #[test]
    fn counts_follow_rounding_rule() {
        let r = (0.5, 0.25, 0.25);
        assert_eq!(split_counts(4, r), (2, 1, 1));
        assert_eq!(split_counts(3, r), (1, 1, 1));
        assert_eq!(split_counts(6, r), (4, 1, 1));
        assert_eq!(split_counts(7, r), (3, 2, 2));
        assert_eq!(split_counts(10, r), (6, 2, 2));
    }

    #[test]
    fn split_partitions_repos() {
        for seed in 0..100 {
            let repos: Vec<_> = (0..4).map(|i| repo(&format!("r{i}"), 1, 2)).collect();
            let splits = split_by_repo(repos, BugKind::WrongBinop, (0.5, 0.25, 0.25), &mut rng_for(seed, 0)).unwrap();
            let sizes: Vec<_> = splits.iter().map(|s| s.repos().len()).collect();
            assert_eq!(sizes, vec![2, 1, 1]);
            let mut all = BTreeSet::new();
            for s in &splits {
                for r in s.repos() {
                    assert!(all.insert(r));
                }
            }
        }
    }

    #[test]
    fn split_needs_three_repos() {
        let repos = vec![repo("a", 1, 1), repo("b", 1, 1)];
        let err = split_by_repo(repos, BugKind::WrongBinop, (0.5, 0.25, 0.25), &mut rng_for(0, 0)).unwrap_err();
        assert!(matches!(err, CorpusError::TooFewRepos(2)));
    }

    #[test]
    fn ratio_subsampling() {
        let mut samples: Vec<Sample> = (0..10).map(|_| sample("r", "+", true)).collect();
        samples.extend((0..50).map(|_| sample("r", "-", false)));
        let split = DatasetSplit::new(SplitName::RealTrain, BugKind::WrongBinop, samples);
        let r2 = subsample_ratio(&split, 2.0, &mut rng_for(1, 0)).unwrap().stats();
        assert_eq!((r2.buggy, r2.nonbuggy), (10, 20));
        let r1 = subsample_ratio(&split, 1.0, &mut rng_for(1, 0)).unwrap().stats();
        assert_eq!((r1.buggy, r1.nonbuggy), (10, 10));
        let big = subsample_ratio(&split, 100.0, &mut rng_for(1, 0)).unwrap().stats();
        assert_eq!((big.buggy, big.nonbuggy), (10, 50));
        assert!(subsample_ratio(&split, 0.5, &mut rng_for(1, 0)).is_err());
    }

    #[test]
    fn fraction_subsampling() {
        let samples: Vec<Sample> = (0..10).map(|i| sample(&format!("r{i}"), "-", false)).collect();
        let split = DatasetSplit::new(SplitName::SynTrain, BugKind::WrongBinop, samples);
        assert_eq!(subsample_fraction(&split, 100.0, &mut rng_for(3, 0)).unwrap(), split);
        let a = subsample_fraction(&split, 16.0, &mut rng_for(3, 0)).unwrap();
        assert_eq!(a.repos().len(), 2);
        assert_eq!(a, subsample_fraction(&split, 16.0, &mut rng_for(3, 0)).unwrap());
    }

    #[test]
    fn dedup_keeps_first() {
        let a = sample("x", "+", false);
        let b = sample("y", "+", false);
        let c = sample("y", "-", false);
        let out = dedup(vec![a.clone(), b, c.clone()]);
        assert_eq!(out, vec![a, c]);
        assert!(dedup(Vec::new()).is_empty());
    }

    #[test]
    fn round_trip_and_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let split = DatasetSplit::new(
            SplitName::RealVal,
            BugKind::WrongBinop,
            vec![sample("a", "+", true), sample("b", "<", false)],
        );
        write_split(&path, &split).unwrap();
        assert_eq!(read_split(&path, SplitName::RealVal, BugKind::WrongBinop).unwrap(), split);

        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        std::fs::write(&path, first.replace("\"label\":1", "\"label\":0")).unwrap();
        assert!(matches!(read_split(&path, SplitName::RealVal, BugKind::WrongBinop), Err(CorpusError::Format { .. })));

        let mut rec: serde_json::Value = serde_json::from_str(first).unwrap();
        let target_bit = rec["rep_target"].as_array().unwrap().iter().position(|v| v == 1).unwrap();
        rec["rep_mask"][target_bit] = 0.into();
        std::fs::write(&path, rec.to_string()).unwrap();
        assert!(matches!(read_split(&path, SplitName::RealVal, BugKind::WrongBinop), Err(CorpusError::Format { .. })));

        rec["rep_mask"][target_bit] = 1.into();
        rec["version"] = 99.into();
        std::fs::write(&path, rec.to_string()).unwrap();
        assert!(matches!(read_split(&path, SplitName::RealVal, BugKind::WrongBinop), Err(CorpusError::Format { .. })));
    }
}
