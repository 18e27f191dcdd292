//! Flat `key = value` config files.
//!
//! Each key is the long name of a flag of the chosen subcommand. Entries are
//! appended to the command line unless the flag is already given there, so
//! flags always win. A value of `true` stands for a bare switch and `false`
//! drops the entry.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", i + 1);
        };
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            bail!("config line {}: bad key `{key}`", i + 1);
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

fn has_flag(args: &[OsString], key: &str) -> bool {
    let bare = format!("--{key}");
    let joined = format!("--{key}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == bare || s.starts_with(&joined)
    })
}

/// Returns `args` with the entries of the `--config` file appended.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let mut merged = args.clone();
    for (key, value) in parse(&text)? {
        if key == "config" || has_flag(&args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => merged.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                merged.push(format!("--{key}").into());
                merged.push(value.into());
            }
        }
    }
    Ok(merged)
}
