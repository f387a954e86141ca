//! Flat `section.key=value` config files merged into the argument list.
//!
//! Entries for the active subcommand (and the `global` section) become
//! `--key value` arguments unless the command line already sets that flag.

use std::path::Path;

use clap::Command;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses `section.key=value` lines; `#` starts a comment line.
pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<ConfigEntry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let (lhs, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(origin, format!("line {lineno}: expected section.key=value")))?;
        let (section, key) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::format(origin, format!("line {lineno}: key `{}` has no section prefix", lhs.trim())))?;
        if section.is_empty() || key.is_empty() {
            return Err(Error::format(origin, format!("line {lineno}: empty section or key")));
        }
        out.push(ConfigEntry {
            section: section.to_string(),
            key: key.to_string(),
            value: value.trim().to_string(),
            line: lineno,
        });
    }
    Ok(out)
}

/// Checks every entry against the command tree and returns the extra
/// arguments for subcommand `active`.
pub fn config_args(
    entries: &[ConfigEntry],
    root: &Command,
    active: &str,
    given: &[String],
    origin: &Path,
) -> Result<Vec<String>> {
    let mut extra = Vec::new();
    for e in entries {
        let sections: Vec<&Command> = if e.section == "global" {
            root.get_subcommands().collect()
        } else {
            match root.find_subcommand(&e.section) {
                Some(c) => vec![c],
                None => {
                    return Err(Error::format(origin, format!("line {}: unknown section `{}`", e.line, e.section)));
                }
            }
        };
        let known = sections.iter().any(|c| c.get_arguments().any(|a| a.get_long() == Some(e.key.as_str())));
        if !known || e.key == "config" {
            return Err(Error::format(origin, format!("line {}: unknown key `{}.{}`", e.line, e.section, e.key)));
        }
        if e.section != "global" && e.section != active {
            continue;
        }
        let Some(cmd) = root.find_subcommand(active) else { continue };
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(e.key.as_str())) else { continue };
        let flag = format!("--{}", e.key);
        let already = given.iter().any(|g| *g == flag || g.starts_with(&format!("{flag}=")));
        if already {
            continue;
        }
        if arg.get_action().takes_values() {
            extra.push(flag);
            extra.push(e.value.clone());
        } else {
            match e.value.as_str() {
                "true" => extra.push(flag),
                "false" => {}
                other => {
                    return Err(Error::format(
                        origin,
                        format!("line {}: `{}` is a switch, expected true or false, got `{other}`", e.line, e.key),
                    ));
                }
            }
        }
    }
    Ok(extra)
}
