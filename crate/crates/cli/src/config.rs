//! `--config FILE` support.
//!
//! The file holds flat `key = value` lines named after the long flags
//! (`theta = 0.1`, `enhanced = true`). Blank lines and lines starting with `#`
//! are ignored. The entries are spliced in right after the subcommand, so any
//! flag given on the command line overrides them.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

fn read_flags(path: &Path) -> Result<Vec<OsString>, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut flags = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key = value", path.display(), lineno + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(format!(
                "{}:{}: invalid key {key:?}",
                path.display(),
                lineno + 1
            ));
        }
        match value {
            "true" => flags.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                flags.push(format!("--{key}").into());
                flags.push(value.into());
            }
        }
    }
    Ok(flags)
}

/// Replaces `--config FILE` (or `--config=FILE`) with the flags from `FILE`.
pub fn splice(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        match arg.to_str() {
            Some("--config") => {
                let value = iter.next().ok_or("--config needs a file path")?;
                path = Some(value);
            }
            Some(s) if s.starts_with("--config=") => path = Some(s["--config=".len()..].into()),
            _ => rest.push(arg),
        }
    }
    let Some(path) = path else { return Ok(rest) };
    // binary name and subcommand come first
    if rest.len() < 2 {
        return Err("--config must follow a subcommand".into());
    }
    let flags = read_flags(Path::new(&path))?;
    rest.splice(2..2, flags);
    Ok(rest)
}
