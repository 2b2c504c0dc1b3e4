use std::collections::{BTreeSet, HashSet};

use driftlab::corpus::{build_datasets, mine_real_bugs, subsample_ratio, BuildOptions, BuiltDatasets};
use driftlab::rng::{rng_for, STREAM_SUBSAMPLE};
use driftlab::syntax::BugKind;
use driftlab::toy::{generate, ToyConfig};
use proptest::prelude::*;

fn small_corpus(seed: u64, kind: BugKind) -> (driftlab::corpus::Corpus, BuiltDatasets) {
    let corpus = generate(&ToyConfig {
        seed,
        syn_repos: 3,
        real_repos: 5,
        syn_functions: 16,
        real_functions: 24,
        ..ToyConfig::default()
    });
    let built = build_datasets(&corpus, kind, &BuildOptions { max_len: 96, seed, ..BuildOptions::default() }).unwrap();
    (corpus, built)
}

fn kind_strategy() -> impl Strategy<Value = BugKind> {
    prop::sample::select(BugKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn no_two_samples_share_tokens(seed in 0u64..1000, kind in kind_strategy()) {
        let (_, built) = small_corpus(seed, kind);
        let mut seen = HashSet::new();
        for split in built.splits() {
            for s in &split.samples {
                prop_assert!(seen.insert(s.token_hash()), "{} {}", split.name, s.meta.function);
            }
        }
    }

    #[test]
    fn syn_train_is_exactly_balanced(seed in 0u64..1000, kind in kind_strategy()) {
        let (_, built) = small_corpus(seed, kind);
        let s = built.syn_train.stats();
        prop_assert!(s.buggy > 0);
        prop_assert_eq!(s.buggy, s.nonbuggy);
    }

    #[test]
    fn real_splits_partition_bug_repositories(seed in 0u64..1000, kind in kind_strategy()) {
        let (corpus, built) = small_corpus(seed, kind);
        let with_bugs: BTreeSet<String> =
            corpus.repos.iter().filter(|r| !mine_real_bugs(r, kind).is_empty()).map(|r| r.name.clone()).collect();
        let real = [&built.real_train, &built.real_val, &built.real_test].map(|s| s.repos());
        for (i, a) in real.iter().enumerate() {
            prop_assert!(a.is_subset(&with_bugs));
            prop_assert!(a.is_disjoint(&built.syn_train.repos()));
            for b in &real[i + 1..] {
                prop_assert!(a.is_disjoint(b));
            }
        }
        let union: BTreeSet<String> = real.iter().flatten().cloned().collect();
        prop_assert_eq!(union, with_bugs);
    }

    #[test]
    fn builds_are_reproducible(seed in 0u64..1000, kind in kind_strategy()) {
        let (_, a) = small_corpus(seed, kind);
        let (_, b) = small_corpus(seed, kind);
        for (x, y) in a.splits().iter().zip(b.splits()) {
            prop_assert_eq!(*x, y);
        }
        prop_assert_eq!(a.stats(), b.stats());
    }

    #[test]
    fn ratio_subsampling_keeps_bugs_and_caps_the_ratio(seed in 0u64..1000, ratio in 1.0f64..64.0, draw in any::<u64>()) {
        let (_, built) = small_corpus(seed, BugKind::WrongBinop);
        let split = &built.real_train;
        let sub = subsample_ratio(split, ratio, &mut rng_for(draw, STREAM_SUBSAMPLE)).unwrap();
        let (before, after) = (split.stats(), sub.stats());
        prop_assert_eq!(after.buggy, before.buggy);
        prop_assert!(after.nonbuggy as f64 <= ratio * after.buggy as f64);
        let bugs: Vec<_> = split.samples.iter().filter(|s| s.is_buggy()).collect();
        let kept: Vec<_> = sub.samples.iter().filter(|s| s.is_buggy()).collect();
        prop_assert_eq!(bugs, kept);
        prop_assert!(sub.samples.iter().all(|s| split.samples.contains(s)));
    }
}
