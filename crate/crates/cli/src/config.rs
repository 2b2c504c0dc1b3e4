//! `key=value` option files. Keys are long flag names without the dashes;
//! every entry becomes a command-line flag placed before the user's own
//! flags, so the command line always wins.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses a config file into `(key, value)` pairs. Blank lines and lines
/// starting with `#` are ignored.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key=value, found {line:?}", i + 1);
        };
        let k = k.trim().trim_start_matches("--");
        if k.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Flags for the config entries. `key=true` becomes a bare switch and
/// `key=false` is dropped.
pub fn to_flags(entries: &[(String, String)]) -> Vec<String> {
    let mut flags = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => flags.push(format!("--{k}")),
            "false" => {}
            _ => flags.push(format!("--{k}={v}")),
        }
    }
    flags
}

/// Expands `--config FILE` (anywhere before the subcommand) into flags
/// inserted right after the subcommand name.
pub fn expand_args(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    rest.extend(it.next());
    let mut seen_sub = false;
    while let Some(a) = it.next() {
        if !seen_sub && a == "--config" {
            config = Some(it.next().context("--config needs a file")?);
            continue;
        }
        if !seen_sub {
            if let Some(p) = a.strip_prefix("--config=") {
                config = Some(p.to_string());
                continue;
            }
        }
        seen_sub |= subcommands.contains(&a.as_str());
        rest.push(a);
    }
    let Some(path) = config else { return Ok(rest) };
    let text = fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config {path}"))?;
    let flags = to_flags(&parse(&text).with_context(|| format!("in config {path}"))?);
    let Some(pos) = rest.iter().position(|a| subcommands.contains(&a.as_str())) else {
        return Ok(rest);
    };
    rest.splice(pos + 1..pos + 1, flags);
    Ok(rest)
}
