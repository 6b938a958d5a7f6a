use std::ffi::OsString;
use std::path::Path;

use pse_core::{Error, Result};

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() || k == "config" {
            return Err(Error::Config(format!("config line {}: bad key {k:?}", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Appends `--key value` for every config entry whose flag is absent from
/// `argv`. Unknown keys surface as unknown flags when parsed.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let mut out = argv.clone();
    for (k, v) in parse(&text)? {
        let flag = format!("--{k}");
        let given = argv.iter().any(|a| {
            let s = a.to_string_lossy();
            s == flag || s.starts_with(&format!("{flag}="))
        });
        if !given {
            out.push(flag.into());
            if !v.is_empty() {
                out.push(v.into());
            }
        }
    }
    Ok(out)
}
