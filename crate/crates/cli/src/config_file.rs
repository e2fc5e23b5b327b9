//! `key=value` config files. Each key names a long option of the invoked
//! subcommand; entries are spliced in right after the subcommand token so
//! that options given on the command line win.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, found '{line}'", i + 1);
        };
        entries.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(entries)
}

fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn given(args: &[String], arg: &clap::Arg) -> bool {
    let long = arg.get_long().map(|l| format!("--{l}"));
    let short = arg.get_short().map(|c| format!("-{c}"));
    args.iter().any(|a| {
        let flag = a.split_once('=').map_or(a.as_str(), |(f, _)| f);
        Some(flag) == long.as_deref() || short.as_deref().is_some_and(|s| a.starts_with(s))
    })
}

/// Returns `args` with the config file's entries inserted after the
/// subcommand name. Options already on the command line are left alone.
pub fn expand(cmd: &Command, args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {path}"))?;
    let entries = parse(&text)?;

    let Some(pos) = args
        .iter()
        .position(|a| cmd.get_subcommands().any(|s| s.get_name() == a))
    else {
        return Ok(args);
    };
    let sub = cmd.find_subcommand(&args[pos]).expect("matched above");

    let mut injected = Vec::new();
    for (key, value) in entries {
        let known_anywhere = cmd.get_subcommands().any(|s| {
            s.get_arguments()
                .any(|a| a.get_long() == Some(key.as_str()))
        });
        if !known_anywhere {
            bail!("config file {path}: unknown option '{key}'");
        }
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            continue;
        };
        if key == "config" || given(&args[pos + 1..], arg) {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                other => bail!("config file {path}: '{key}' expects true/false, found '{other}'"),
            }
        }
    }
    let mut out = args;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_underscores() {
        let e = parse("# defaults\nk_neighbors = 50\n\nseed=7\n").unwrap();
        assert_eq!(
            e,
            vec![
                ("k-neighbors".to_string(), "50".to_string()),
                ("seed".to_string(), "7".to_string())
            ]
        );
        assert!(parse("oops\n").is_err());
    }
}
