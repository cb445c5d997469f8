//! Flat `key=value` text: one pair per line, `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if entries
                .insert(k.to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses `key` if present, leaving `slot` untouched otherwise.
    pub fn read<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key) {
            *slot = v
                .parse()
                .map_err(|e| Error::Config(format!("{key}={v}: {e}")))?;
        }
        Ok(())
    }

    /// Overlays every entry of `other` on top of `self`.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Fails if any key is outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }

    /// Sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_comments_and_whitespace() {
        let kv = KeyValues::parse("# header\n a = 1 \n\nb=x # trailing\n").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b"), Some("x"));
        assert_eq!(kv.to_text(), "a=1\nb=x\n");
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse("=3\n").is_err());
        assert!(KeyValues::parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn typed_read_and_round_trip() {
        let mut kv = KeyValues::new();
        kv.set("lr", 1e-4);
        kv.set("n", 7);
        let back = KeyValues::parse(&kv.to_text()).unwrap();
        let (mut lr, mut n, mut missing) = (0.0f64, 0usize, 5u32);
        back.read("lr", &mut lr).unwrap();
        back.read("n", &mut n).unwrap();
        back.read("absent", &mut missing).unwrap();
        assert_eq!((lr, n, missing), (1e-4, 7, 5));
        let mut bad = 0usize;
        assert!(KeyValues::parse("n=x")
            .unwrap()
            .read("n", &mut bad)
            .is_err());
    }
}
