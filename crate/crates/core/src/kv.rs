//! Flat `key=value` blocks with `#` comments.
//!
//! Used for serialized feature/target specs, run configs and CLI config
//! files. Keys keep insertion order so emitted blocks are byte-stable.

use crate::{Error, Result};
use std::fmt::Write as _;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvBlock {
    entries: Vec<(String, String)>,
}

impl KvBlock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse(format!("bad value for `{key}`: {v}"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Copies every entry of `other` over this block.
    pub fn merge(&mut self, other: &KvBlock) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = KvBlock::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value, got `{raw}`", lineno + 1))
            })?;
            out.set(k.trim(), v.trim());
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// Formats reals so that parsing gives back the identical bits.
pub fn fmt_reals(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:e}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_reals(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad real `{t}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_comments_and_override() {
        let b = KvBlock::parse("# header\nd = 8\nk=2 # trailing\n\nd=9\n").unwrap();
        assert_eq!(b.get("d"), Some("9"));
        assert_eq!(b.get("k"), Some("2"));
        assert_eq!(b.iter().count(), 2);
        assert!(KvBlock::parse("novalue\n").is_err());
    }

    #[test]
    fn reals_round_trip_bit_exact() {
        let xs = [0.1, -1.0 / 3.0, 1e-300, 6.02e23, 0.0];
        let back = parse_reals(&fmt_reals(&xs)).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
