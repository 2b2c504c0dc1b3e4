//! Deterministic generator for a small corpus of Python repositories.
//!
//! Functions are instantiated from a fixed set of templates with random
//! variable names. Synthetic repositories only use each template's canonical
//! form. Real repositories also use correct alternative forms, some of which
//! differ from the canonical one by a single operator, and carry a fix
//! history produced by a biased bug generator: operators are replaced by their
//! closest neighbour, variables by the most recently defined other variable,
//! and argument swaps always exchange the first two arguments of a call.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{Corpus, FixRecord, Repo, SourceFile};
use crate::mutate::{extract_real_bug, inject_at, Repair};
use crate::rng::{rng_for, Rng, STREAM_TOY};
use crate::syntax::{analyze, candidates_for, lex, vocab_index, BugKind, CandidateMap, TokenStream};

struct Form {
    stem: &'static str,
    text: &'static str,
}

struct Template {
    canonical: Form,
    variants: &'static [Form],
}

macro_rules! form {
    ($stem:literal, $text:literal) => {
        Form { stem: $stem, text: $text }
    };
}

// `$f` is the function name and `$0`..`$5` are distinct variable names.
const TEMPLATES: &[Template] = &[
    Template {
        canonical: form!("clamp", "def $f($0, $1, $2):\n    if $0 < $1:\n        return $1\n    if $0 > $2:\n        return $2\n    return $0\n"),
        variants: &[form!("clamp_rev", "def $f($0, $1, $2):\n    if $1 > $0:\n        return $1\n    if $2 < $0:\n        return $2\n    return $0\n")],
    },
    Template {
        canonical: form!("sum_positive", "def $f($0):\n    $1 = 0\n    for $2 in $0:\n        if $2 > 0:\n            $1 = $1 + $2\n    return $1\n"),
        variants: &[form!("sum_negative", "def $f($0):\n    $1 = 0\n    for $2 in $0:\n        if $2 < 0:\n            $1 = $1 + $2\n    return $1\n")],
    },
    Template {
        canonical: form!("mean", "def $f($0):\n    if len($0) == 0:\n        return 0\n    return sum($0) / len($0)\n"),
        variants: &[form!("mean_or_zero", "def $f($0):\n    if len($0) != 0:\n        return sum($0) / len($0)\n    return 0\n")],
    },
    Template {
        canonical: form!("count_equal", "def $f($0, $1):\n    $2 = 0\n    for $3 in $0:\n        if $3 == $1:\n            $2 = $2 + 1\n    return $2\n"),
        variants: &[form!("count_other", "def $f($0, $1):\n    $2 = 0\n    for $3 in $0:\n        if $3 != $1:\n            $2 = $2 + 1\n    return $2\n")],
    },
    Template {
        canonical: form!("find_index", "def $f($0, $1):\n    $2 = 0\n    while $2 < len($0):\n        if $0[$2] == $1:\n            return $2\n        $2 = $2 + 1\n    return -1\n"),
        variants: &[form!("find_index_rev", "def $f($0, $1):\n    $2 = len($0) - 1\n    while $2 >= 0:\n        if $0[$2] == $1:\n            return $2\n        $2 = $2 - 1\n    return -1\n")],
    },
    Template {
        canonical: form!("is_blank", "def $f($0):\n    return $0 is None or len($0) == 0\n"),
        variants: &[form!("is_filled", "def $f($0):\n    return $0 is not None and len($0) != 0\n")],
    },
    Template {
        canonical: form!("in_range", "def $f($0, $1, $2):\n    return $0 >= $1 and $0 < $2\n"),
        variants: &[form!("out_of_range", "def $f($0, $1, $2):\n    return $0 < $1 or $0 >= $2\n")],
    },
    Template {
        canonical: form!("distance", "def $f($0, $1, $2, $3):\n    $4 = $2 - $0\n    $5 = $3 - $1\n    return math.sqrt($4 * $4 + $5 * $5)\n"),
        variants: &[],
    },
    Template {
        canonical: form!("lookup", "def $f($0, $1, $2):\n    if $1 in $0:\n        return $0[$1]\n    return $2\n"),
        variants: &[form!("lookup_missing", "def $f($0, $1, $2):\n    if $1 not in $0:\n        return $2\n    return $0[$1]\n")],
    },
    Template {
        canonical: form!("merge_counts", "def $f($0, $1):\n    $2 = dict($0)\n    for $3 in $1:\n        $2[$3] = $2.get($3, 0) + $1[$3]\n    return $2\n"),
        variants: &[form!("subtract_counts", "def $f($0, $1):\n    $2 = dict($0)\n    for $3 in $1:\n        $2[$3] = $2.get($3, 0) - $1[$3]\n    return $2\n")],
    },
    Template {
        canonical: form!("scale_all", "def $f($0, $1):\n    $2 = []\n    for $3 in $0:\n        $2.append($3 * $1)\n    return $2\n"),
        variants: &[form!("shrink_all", "def $f($0, $1):\n    $2 = []\n    for $3 in $0:\n        $2.append($3 / $1)\n    return $2\n")],
    },
    Template {
        canonical: form!("percent", "def $f($0, $1):\n    if $1 == 0:\n        return 0.0\n    return 100.0 * $0 / $1\n"),
        variants: &[],
    },
    Template {
        canonical: form!("maximum", "def $f($0):\n    $1 = $0[0]\n    for $2 in $0:\n        if $2 > $1:\n            $1 = $2\n    return $1\n"),
        variants: &[form!("minimum", "def $f($0):\n    $1 = $0[0]\n    for $2 in $0:\n        if $2 < $1:\n            $1 = $2\n    return $1\n")],
    },
    Template {
        canonical: form!("evens", "def $f($0):\n    $1 = []\n    for $2 in $0:\n        if $2 % 2 == 0:\n            $1.append($2)\n    return $1\n"),
        variants: &[form!("odds", "def $f($0):\n    $1 = []\n    for $2 in $0:\n        if $2 % 2 != 0:\n            $1.append($2)\n    return $1\n")],
    },
    Template {
        canonical: form!("safe_div", "def $f($0, $1, $2):\n    if $1 != 0:\n        return $0 / $1\n    return $2\n"),
        variants: &[form!("safe_div_early", "def $f($0, $1, $2):\n    if $1 == 0:\n        return $2\n    return $0 / $1\n")],
    },
    Template {
        canonical: form!("join_path", "def $f($0, $1):\n    if $0.endswith('/'):\n        return $0 + $1\n    return $0 + '/' + $1\n"),
        variants: &[],
    },
    Template {
        canonical: form!("window_sum", "def $f($0, $1, $2):\n    $3 = 0\n    for $4 in range($1, $2):\n        $3 = $3 + $0[$4]\n    return $3\n"),
        variants: &[form!("window_product", "def $f($0, $1, $2):\n    $3 = 1\n    for $4 in range($1, $2):\n        $3 = $3 * $0[$4]\n    return $3\n")],
    },
    Template {
        canonical: form!("lerp", "def $f($0, $1, $2):\n    return $0 + ($1 - $0) * $2\n"),
        variants: &[],
    },
    Template {
        canonical: form!("area", "def $f($0, $1):\n    if $0 <= 0 or $1 <= 0:\n        return 0\n    return $0 * $1\n"),
        variants: &[form!("area_checked", "def $f($0, $1):\n    if $0 > 0 and $1 > 0:\n        return $0 * $1\n    return 0\n")],
    },
    Template {
        canonical: form!("collect_named", "def $f($0, $1):\n    if $0 is not None and $0 != '':\n        $1.append($0)\n    return $1\n"),
        variants: &[],
    },
    Template {
        canonical: form!("dot", "def $f($0, $1):\n    $2 = 0\n    for $3 in range(len($0)):\n        $2 = $2 + $0[$3] * $1[$3]\n    return $2\n"),
        variants: &[],
    },
    Template {
        canonical: form!("to_fahrenheit", "def $f($0):\n    return $0 * 9 / 5 + 32\n"),
        variants: &[form!("to_celsius", "def $f($0):\n    return ($0 - 32) * 5 / 9\n")],
    },
    Template {
        canonical: form!("without_key", "def $f($0, $1):\n    $2 = {}\n    for $3 in $0:\n        if $3 != $1:\n            $2[$3] = $0[$3]\n    return $2\n"),
        variants: &[form!("only_key", "def $f($0, $1):\n    $2 = {}\n    for $3 in $0:\n        if $3 == $1:\n            $2[$3] = $0[$3]\n    return $2\n")],
    },
    Template {
        canonical: form!("pad_left", "def $f($0, $1, $2):\n    while len($0) < $1:\n        $0 = $2 + $0\n    return $0\n"),
        variants: &[form!("pad_right", "def $f($0, $1, $2):\n    while len($0) < $1:\n        $0 = $0 + $2\n    return $0\n")],
    },
    Template {
        canonical: form!("replace_strip", "def $f($0, $1, $2):\n    $3 = $0.replace($1, $2)\n    if len($3) > 0:\n        return $3.strip()\n    return $3\n"),
        variants: &[],
    },
    Template {
        canonical: form!("bounded_add", "def $f($0, $1, $2):\n    $3 = $0 + $1\n    if $3 > $2:\n        $3 = $2\n    return $3\n"),
        variants: &[form!("bounded_sub", "def $f($0, $1, $2):\n    $3 = $0 - $1\n    if $3 < $2:\n        $3 = $2\n    return $3\n")],
    },
];

const NAMES: &[&str] = &[
    "items", "values", "data", "total", "count", "limit", "size", "key", "item", "value", "result", "acc",
    "idx", "left", "right", "lo", "hi", "node", "seq", "text", "name", "weight", "score", "buf", "row",
    "col", "offset", "step", "x", "y", "a", "b", "n", "k", "s", "t",
];

/// Closest wrong operator used by the real-bug generator.
fn neighbour(op: &str) -> Option<&'static str> {
    Some(match op {
        "<" => "<=",
        "<=" => "<",
        ">" => ">=",
        ">=" => ">",
        "==" => "!=",
        "!=" => "==",
        "+" => "-",
        "-" => "+",
        "*" => "/",
        "/" => "*",
        "%" => "/",
        "and" => "or",
        "or" => "and",
        "in" => "not in",
        "not in" => "in",
        "is" => "is not",
        "is not" => "is",
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub syn_repos: usize,
    pub real_repos: usize,
    pub syn_functions: usize,
    pub real_functions: usize,
    /// Functions per source file.
    pub file_size: usize,
    /// Real bugs per real repository and bug kind.
    pub bugs_per_repo: usize,
    /// Bug kinds that get a fix history.
    pub kinds: Vec<BugKind>,
    /// Probability that a real-repository function uses an alternative form.
    pub variant_rate: f64,
    /// Fix commits per real repository that change code without fixing a
    /// single-token bug.
    pub distractors: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seed: 0,
            syn_repos: 12,
            real_repos: 24,
            syn_functions: 40,
            real_functions: 72,
            file_size: 8,
            bugs_per_repo: 2,
            kinds: BugKind::ALL.to_vec(),
            variant_rate: 0.5,
            distractors: 1,
        }
    }
}

/// Number of templates the generator draws from.
pub fn template_count() -> usize {
    TEMPLATES.len()
}

/// Source text of a function from template `index`; canonical form unless
/// `variant_rate` picks an alternative.
pub fn template_function(index: usize, variant_rate: f64, rng: &mut Rng) -> String {
    let t = &TEMPLATES[index];
    let variants = variant_rate > 0.0;
    let form = if variants && !t.variants.is_empty() && rng.gen_bool(variant_rate) {
        t.variants.choose(rng).expect("variants")
    } else {
        &t.canonical
    };
    instantiate(form, rng)
}

fn instantiate(form: &Form, rng: &mut Rng) -> String {
    let names: Vec<&str> = NAMES.choose_multiple(rng, 6).copied().collect();
    let mut text = form.text.replace("$f", form.stem);
    for (i, n) in names.iter().enumerate() {
        text = text.replace(&format!("${i}"), n);
    }
    canonical(&text)
}

fn canonical(text: &str) -> String {
    lex(text).expect("templates lex").render()
}

/// The biased rewrite for `kind`, if the function admits one.
fn biased_rewrite(tokens: &TokenStream, cands: &CandidateMap, rng: &mut Rng) -> Option<(usize, Repair)> {
    let mut options = Vec::new();
    match cands.kind {
        BugKind::WrongBinop => {
            for &l in &cands.loc {
                let Some(op) = neighbour(&tokens[l].text).and_then(vocab_index) else { continue };
                if cands.rep_of[&l].contains(&op) {
                    options.push((l, Repair::Operator(op)));
                }
            }
        }
        BugKind::VarMisuse => {
            for &l in &cands.loc {
                let own = &tokens[l].text;
                let recent = cands.rep_of[&l]
                    .iter()
                    .copied()
                    .filter(|&r| r < l && tokens[r].text != *own)
                    .max();
                if let Some(r) = recent {
                    options.push((l, Repair::Token(r)));
                }
            }
        }
        BugKind::ArgSwap => {
            let facts = analyze(tokens).ok()?;
            for call in &facts.calls {
                let args: Vec<_> = call.handled_args().collect();
                if args.len() >= 2 && cands.contains_loc(args[0].range.start) {
                    options.push((args[0].range.start, Repair::Token(args[1].range.start)));
                }
            }
        }
    }
    options.choose(rng).copied()
}

/// Applies the biased generator to a function's text and returns the buggy
/// text, provided the bug can be mined back from the pair.
pub fn biased_bug(text: &str, kind: BugKind, rng: &mut Rng) -> Option<String> {
    let tokens = lex(text).ok()?;
    let cands = candidates_for(&tokens, kind).ok()?;
    let (loc, rewrite) = biased_rewrite(&tokens, &cands, rng)?;
    let (buggy, _) = inject_at(&tokens, &cands, loc, rewrite).ok()?;
    let rendered = buggy.render();
    let relexed = lex(&rendered).ok()?;
    if !relexed.same_text(&buggy) {
        return None;
    }
    extract_real_bug(&relexed, &tokens, kind)?;
    Some(rendered)
}

/// A rename of one variable throughout the function: several edits, so no
/// single-token bug can be mined from it.
fn distractor(text: &str) -> Option<String> {
    let tokens = lex(text).ok()?;
    let facts = analyze(&tokens).ok()?;
    let def = facts.var_defs.iter().find(|d| facts.var_uses.iter().filter(|u| u.name == d.name).count() >= 2)?;
    let fresh = NAMES.iter().find(|n| !tokens.iter().any(|t| t.text == **n))?;
    let mut out = tokens.tokens().to_vec();
    for t in out.iter_mut().filter(|t| t.text == def.name) {
        t.text = fresh.to_string();
    }
    Some(TokenStream::from_tokens(out).render())
}

/// `n` functions; templates do not repeat within a file, so function names
/// are unique per file.
fn functions_for(n: usize, file_size: usize, variant_rate: f64, rng: &mut Rng) -> Vec<String> {
    let per_file = file_size.clamp(1, TEMPLATES.len());
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = per_file.min(n - out.len());
        let picks: Vec<usize> = rand::seq::index::sample(rng, TEMPLATES.len(), k).into_vec();
        for t in picks {
            out.push(template_function(t, variant_rate, rng));
        }
    }
    out
}

fn files_of(functions: &[String], file_size: usize) -> Vec<SourceFile> {
    functions
        .chunks(file_size.clamp(1, TEMPLATES.len()))
        .enumerate()
        .map(|(i, chunk)| SourceFile { path: format!("pkg/mod{i:02}.py"), text: chunk.join("\n") })
        .collect()
}

fn synthetic_repo(name: String, cfg: &ToyConfig, rng: &mut Rng) -> Repo {
    let functions = functions_for(cfg.syn_functions, cfg.file_size, 0.0, rng);
    Repo { name, files: files_of(&functions, cfg.file_size), fixes: Vec::new() }
}

fn real_repo(name: String, cfg: &ToyConfig, rng: &mut Rng) -> Repo {
    let functions = functions_for(cfg.real_functions, cfg.file_size, cfg.variant_rate, rng);
    let files = files_of(&functions, cfg.file_size);
    let fs = cfg.file_size.clamp(1, TEMPLATES.len());
    let mut fixes = Vec::new();
    let mut used = BTreeSet::new();
    let mut commit = 0;
    let mut fix_for = |i: usize, before_fn: String, fixes: &mut Vec<FixRecord>| {
        let file = &files[i / fs];
        let mut chunk: Vec<String> = functions[(i / fs) * fs..((i / fs + 1) * fs).min(functions.len())].to_vec();
        chunk[i % fs] = before_fn;
        commit += 1;
        fixes.push(FixRecord {
            commit: format!("{name}-{commit:04}"),
            file: file.path.clone(),
            before: chunk.join("\n"),
            after: file.text.clone(),
        });
    };
    for &kind in &cfg.kinds {
        let mut made = 0;
        let mut order: Vec<usize> = (0..functions.len()).collect();
        order.shuffle(rng);
        for i in order {
            if made == cfg.bugs_per_repo {
                break;
            }
            if used.contains(&i) {
                continue;
            }
            if let Some(buggy) = biased_bug(&functions[i], kind, rng) {
                used.insert(i);
                fix_for(i, buggy, &mut fixes);
                made += 1;
            }
        }
    }
    for _ in 0..cfg.distractors {
        let i = rng.gen_range(0..functions.len());
        if let Some(before) = distractor(&functions[i]) {
            fix_for(i, before, &mut fixes);
        }
    }
    Repo { name, files, fixes }
}

/// Generates the corpus. Output depends only on `cfg`.
pub fn generate(cfg: &ToyConfig) -> Corpus {
    let mut rng = rng_for(cfg.seed, STREAM_TOY);
    let mut repos = Vec::new();
    for i in 0..cfg.syn_repos {
        repos.push(synthetic_repo(format!("syn{i:02}"), cfg, &mut rng));
    }
    for i in 0..cfg.real_repos {
        repos.push(real_repo(format!("real{i:02}"), cfg, &mut rng));
    }
    Corpus { repos }
}
