use std::ffi::OsString;
use std::path::PathBuf;

use crate::error::{Error, Result};

fn value_flags(key: &str, value: &toml::Value, out: &mut Vec<OsString>) -> Result<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        toml::Value::Boolean(true) => out.push(flag.into()),
        toml::Value::Boolean(false) => {}
        toml::Value::String(s) => out.extend([flag.into(), s.into()]),
        toml::Value::Integer(i) => out.extend([flag.into(), i.to_string().into()]),
        toml::Value::Float(f) => out.extend([flag.into(), f.to_string().into()]),
        toml::Value::Array(items) => {
            for item in items {
                value_flags(key, item, out)?;
            }
        }
        other => {
            return Err(Error::Config(format!("config key `{key}` has unsupported value {other}")));
        }
    }
    Ok(())
}

/// Removes `--config FILE` from `args` and splices the file's keys in as
/// flags directly after the subcommand, so explicit flags still win.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path: Option<PathBuf> = None;
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            let p = it.next().ok_or_else(|| Error::Config("--config needs a file".into()))?;
            path = Some(p.into());
        } else if let Some(p) = arg.to_str().and_then(|s| s.strip_prefix("--config=")) {
            path = Some(p.into());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut flags = Vec::new();
    for (key, value) in &table {
        value_flags(key, value, &mut flags)?;
    }
    // program name, then the subcommand
    let at = 2.min(rest.len());
    rest.splice(at..at, flags);
    Ok(rest)
}
