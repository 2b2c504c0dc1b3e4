//! Dataset construction: samples, deduplication, repository splits,
//! subsampling and the JSON Lines dataset format.

mod build;
mod sample;
mod split;

use std::path::Path;

use thiserror::Error;

pub use build::{
    build_datasets, build_syn_train, functions_of, mine_real_bugs, BuildOptions, BuildReport, BuiltDatasets, Corpus,
    FixRecord, MinedBug, Repo, SourceFile, SourceFunction, FIXES_FILE, STATS_FILE,
};
pub use sample::{count_set, set_bits, token_hash, Origin, Sample, SampleMeta, SampleSkip, FORMAT_VERSION};
pub use split::{
    dedup, read_split, split_by_repo, split_counts, subsample_fraction, subsample_ratio, write_split, DatasetSplit,
    DatasetStats, RepoSamples, SplitName, SplitStats,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("need at least 3 repositories with real bugs to split, found {0}")]
    TooFewRepos(usize),
    #[error("no eligible functions")]
    NoEligibleFunctions,
    #[error("{0}")]
    InvalidArgument(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.display().to_string(), source }
    }
}
