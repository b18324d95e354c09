//! Flat `key = value` config files. A key names a long flag without its
//! dashes (`tsafety = 2.5`) and applies to whichever subcommand defines it;
//! `ima.tsafety = 2.5` applies to one subcommand only. Lines starting with
//! `#` are comments. A key may repeat for repeatable flags. Values only fill
//! in flags that are absent from the command line.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub scope: Option<String>,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        let (scope, key) = match k.rsplit_once('.') {
            Some((s, k)) => (Some(s.to_string()), k.to_string()),
            None => (None, k.to_string()),
        };
        out.push(Entry { line: i + 1, scope, key, value: v.trim().to_string() });
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<Entry>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Value of `--config` in `argv`, if given.
pub fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Some(v.into());
        }
    }
    None
}

fn all_long_flags(cmd: &Command, out: &mut Vec<String>) {
    out.extend(cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)));
    for s in cmd.get_subcommands() {
        all_long_flags(s, out);
    }
}

/// Inserts config values after the subcommand name(s) in `argv`.
pub fn merge(root: &Command, argv: Vec<OsString>, entries: &[Entry]) -> Result<Vec<OsString>, String> {
    let mut known = Vec::new();
    all_long_flags(root, &mut known);
    for e in entries {
        if !known.contains(&e.key) {
            return Err(format!("config line {}: unknown key '{}'", e.line, e.key));
        }
    }

    // Walk the subcommand path; global `--config FILE` may precede it.
    let mut cmd = root;
    let mut path = Vec::new();
    let mut insert_at = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            if path.is_empty() {
                i += 1;
                continue;
            }
            break;
        }
        match cmd.find_subcommand(a.as_ref()) {
            Some(sub) => {
                path.push(sub.get_name().to_string());
                cmd = sub;
                insert_at = Some(i + 1);
                i += 1;
            }
            None => break,
        }
    }
    let Some(at) = insert_at else {
        return Ok(argv);
    };
    let scope = path.join(".");
    let given: Vec<String> = argv[at..]
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();

    let mut extra: Vec<OsString> = Vec::new();
    for e in entries {
        if e.scope.as_ref().is_some_and(|s| *s != scope && *s != path[0]) {
            continue;
        }
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(e.key.as_str())) else {
            continue;
        };
        if given.contains(&e.key) {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match e.value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => extra.push(format!("--{}", e.key).into()),
                "false" | "no" | "0" | "off" => {}
                other => return Err(format!("config line {}: '{}' expects true or false, got '{other}'", e.line, e.key)),
            }
        } else {
            extra.push(format!("--{}={}", e.key, e.value).into());
        }
    }
    let mut out = argv;
    out.splice(at..at, extra);
    Ok(out)
}
