//! `key=value` config files.
//!
//! Any long flag can be set from a file named by `--config`; flags given
//! on the command line win. Splicing happens before clap parses: config
//! entries become `--key value` pairs inserted right after the
//! subcommand, but only for keys the user did not pass explicitly.

use std::path::Path;

/// Parse a config file into flag/value pairs.
///
/// One `key=value` per line; a bare `key` line sets a boolean flag.
/// Blank lines and `#` comments are ignored.
pub fn load_entries(path: &Path) -> Result<Vec<(String, Option<String>)>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim().to_string())),
            None => (line, None),
        };
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(format!(
                "config file {} line {}: bad entry {raw:?}",
                path.display(),
                idx + 1
            ));
        }
        if key == "config" {
            return Err(format!(
                "config file {} line {}: config files cannot nest",
                path.display(),
                idx + 1
            ));
        }
        entries.push((key.to_string(), value));
    }
    Ok(entries)
}

/// Inject config-derived flags into the argument vector.
///
/// The result keeps the original order (`prog subcmd <config flags>
/// <user flags>`); entries whose flag already appears among the user's
/// arguments are dropped, which is what makes explicit flags override the
/// file.
pub fn splice(argv: Vec<String>) -> Result<Vec<String>, String> {
    let config_path = find_config_value(&argv);
    let Some(path) = config_path else {
        return Ok(argv);
    };
    // only splice after an actual subcommand token; otherwise let clap
    // report the usage error itself
    if argv.len() < 2 || argv[1].starts_with('-') {
        return Ok(argv);
    }
    let entries = load_entries(Path::new(&path))?;

    let mut spliced = Vec::with_capacity(argv.len() + entries.len() * 2);
    spliced.push(argv[0].clone());
    spliced.push(argv[1].clone());
    for (key, value) in entries {
        let flag = format!("--{key}");
        if user_passed(&argv[2..], &flag) {
            continue;
        }
        spliced.push(flag);
        if let Some(v) = value {
            spliced.push(v);
        }
    }
    spliced.extend(argv.into_iter().skip(2));
    Ok(spliced)
}

fn find_config_value(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = arg.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn user_passed(args: &[String], flag: &str) -> bool {
    args.iter()
        .any(|a| a == flag || a.starts_with(&format!("{flag}=")))
}
