//! Flat `key=value` config files.
//!
//! Each key names a long flag of the invoked subcommand (or a global flag).
//! Values `true`/`false` toggle switches. Keys may repeat for flags that accept
//! several values. Flags given on the command line take precedence.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use super::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
}

pub fn parse_config(text: &str) -> Result<Vec<ConfigEntry>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format(format!("config line {}: expected key=value", lineno + 1))
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::format(format!("config line {}: empty key", lineno + 1)));
        }
        out.push(ConfigEntry {
            key,
            value: v.trim().to_owned(),
        });
    }
    Ok(out)
}

/// Global options that take a value; needed to find the subcommand in argv.
const GLOBAL_VALUED: &[&str] = &["--threads", "--log-level", "--config"];

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
        if s == "--" {
            break;
        }
    }
    None
}

/// Index just past the subcommand path (`analyze overlap` counts as two tokens).
fn subcommand_end(args: &[OsString]) -> Option<(usize, Vec<String>)> {
    let mut i = 1;
    let mut path = Vec::new();
    let mut cmd = RunConfig::command();
    while i < args.len() {
        let s = args[i].to_string_lossy().into_owned();
        if GLOBAL_VALUED.contains(&s.as_str()) {
            i += 2;
            continue;
        }
        if s.starts_with('-') {
            i += 1;
            continue;
        }
        let sub = cmd.find_subcommand(&s)?.clone();
        path.push(s);
        cmd = sub;
        i += 1;
        if !cmd.has_subcommands() {
            return Some((i, path));
        }
    }
    None
}

/// Long flags accepted by the subcommand at `path`, with whether each takes a value.
fn known_flags(path: &[String]) -> Vec<(String, bool)> {
    let mut cmd = RunConfig::command();
    cmd.build();
    let mut flags: Vec<(String, bool)> = Vec::new();
    let mut collect = |c: &clap::Command| {
        for a in c.get_arguments() {
            if let Some(l) = a.get_long() {
                let takes = a.get_num_args().map(|r| r.takes_values()).unwrap_or(false);
                flags.push((l.to_owned(), takes));
            }
        }
    };
    collect(&cmd);
    let mut cur = cmd;
    for p in path {
        let Some(sub) = cur.find_subcommand(p).cloned() else {
            break;
        };
        let mut sub = sub;
        sub.build();
        collect(&sub);
        cur = sub;
    }
    flags
}

/// Splices config-file settings in right after the subcommand so that
/// explicit flags, which come later, override them.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let p = Path::new(&path);
    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    let entries = parse_config(&text)?;
    let Some((at, subpath)) = subcommand_end(&args) else {
        return Ok(args);
    };
    let flags = known_flags(&subpath);
    let mut injected: Vec<OsString> = Vec::new();
    for e in entries {
        if e.key == "config" {
            continue;
        }
        let Some((_, takes_value)) = flags.iter().find(|(l, _)| *l == e.key) else {
            log::warn!("config key {:?} does not apply to this command; ignored", e.key);
            continue;
        };
        if *takes_value {
            injected.push(format!("--{}", e.key).into());
            injected.push(e.value.into());
        } else {
            match e.value.as_str() {
                "true" | "1" | "yes" | "" => injected.push(format!("--{}", e.key).into()),
                "false" | "0" | "no" => {}
                other => {
                    return Err(Error::validation(format!(
                        "config key {:?} is a switch, got value {other:?}",
                        e.key
                    )))
                }
            }
        }
    }
    let mut out = args[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}
