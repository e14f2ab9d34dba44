//! Config layering: built-in defaults, then the `--config` file, then
//! `--set key=value` pairs, then typed flags.

use std::path::Path;

use hierpoly::kv::{parse_reals, KvBlock};
use hierpoly::{Error, Result};

pub fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

/// Merges the layers in increasing priority and rejects keys outside `known`.
pub fn resolve(defaults: KvBlock, file: Option<&Path>, sets: &[String], flags: KvBlock, known: &[&str]) -> Result<KvBlock> {
    let mut out = defaults;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        out.merge(&KvBlock::parse(&text)?);
    }
    let mut set_block = KvBlock::new();
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects key=value, got `{s}`")))?;
        set_block.set(k.trim(), v.trim());
    }
    out.merge(&set_block);
    out.merge(&flags);
    for (k, _) in out.iter() {
        if !known.contains(&k) {
            return Err(usage(format!("unknown config key `{k}`")));
        }
    }
    Ok(out)
}

/// Whether `key` came from anything above the defaults.
pub fn overridden(file: Option<&Path>, sets: &[String], flags: &KvBlock, key: &str) -> Result<bool> {
    if flags.get(key).is_some() {
        return Ok(true);
    }
    if sets.iter().any(|s| s.split_once('=').is_some_and(|(k, _)| k.trim() == key)) {
        return Ok(true);
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        return Ok(KvBlock::parse(&text)?.get(key).is_some());
    }
    Ok(false)
}

pub fn get<T: std::str::FromStr>(b: &KvBlock, key: &str) -> Result<T> {
    b.parse_value(key)?
        .ok_or_else(|| usage(format!("missing config key `{key}`")))
}

pub fn reals(b: &KvBlock, key: &str) -> Result<Vec<f64>> {
    parse_reals(b.require(key)?)
}

pub fn list<T: std::str::FromStr>(b: &KvBlock, key: &str) -> Result<Vec<T>> {
    b.require(key)?
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Parse(format!("bad entry `{s}` in `{key}`")))
        })
        .collect()
}

/// Adds `key=value` to `b` when the flag was given.
pub fn put<T: ToString>(b: &mut KvBlock, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        b.set(key, v.to_string());
    }
}
