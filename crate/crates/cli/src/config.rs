//! Plain-text run configuration.
//!
//! A config file holds `key = value` lines, where a key is a long flag name
//! (`n-survived` and `n_survived` are equivalent). Keys above the first
//! `[section]` header apply to whichever command is run and are skipped by
//! commands that do not take them. Keys under `[evaluate]`, `[train]` and so
//! on apply to that command only. `#` starts a comment.
//!
//! Settings are spliced in front of the command-line flags, and since every
//! flag may be repeated with the last one winning, the command line overrides
//! the file.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::Command;

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, String> {
    let mut section = None;
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        entries.push(Entry {
            section: section.clone(),
            key,
            value: value.trim().to_string(),
            line: n + 1,
        });
    }
    Ok(entries)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn long_names(cmd: &Command) -> Vec<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long())
        .map(str::to_string)
        .collect()
}

/// Returns `args` with the settings of the `--config` file (if any) inserted
/// right after the subcommand name.
pub fn expand_args(args: Vec<OsString>, root: &Command) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let subcommands: Vec<String> = root
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let Some(pos) = args
        .iter()
        .position(|a| subcommands.iter().any(|s| a.to_string_lossy() == *s))
    else {
        return Ok(args);
    };
    let chosen = args[pos].to_string_lossy().to_string();
    let text = fs::read_to_string(&path).map_err(|e| Failure::io(&path, e))?;
    let entries = parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;

    let global = long_names(root);
    let own: Vec<String> = root
        .find_subcommand(&chosen)
        .map(long_names)
        .unwrap_or_default();
    let known_anywhere = |key: &str| {
        global.iter().any(|g| g == key)
            || root
                .get_subcommands()
                .any(|c| long_names(c).iter().any(|l| l == key))
    };

    let mut injected = Vec::new();
    for e in entries {
        if e.key == "config" {
            return Err(Failure::Usage(format!(
                "{}: line {}: config files cannot include others",
                path.display(),
                e.line
            )));
        }
        if let Some(s) = &e.section {
            if !subcommands.contains(s) {
                return Err(Failure::Usage(format!(
                    "{}: line {}: unknown section [{s}]",
                    path.display(),
                    e.line
                )));
            }
            if *s != chosen {
                continue;
            }
        }
        let applies = own.contains(&e.key) || global.contains(&e.key);
        if !applies {
            if e.section.is_some() || !known_anywhere(&e.key) {
                return Err(Failure::Usage(format!(
                    "{}: line {}: `{}` is not a setting of `{chosen}`",
                    path.display(),
                    e.line,
                    e.key
                )));
            }
            continue;
        }
        injected.push(OsString::from(format!("--{}={}", e.key, e.value)));
    }
    let mut out = args;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}
