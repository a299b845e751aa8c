//! Flat `key=value` settings: a config file overlaid by command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "SPARSE_RNN_SEED";

/// Parses `key=value` lines. Blank lines and `#` comments are ignored;
/// dashes in keys are read as underscores.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
        let key = normalize(k.trim());
        if key.is_empty() {
            return Err(CliError::Config(format!("config line {}: empty key", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("config line {}: duplicate key {key}", i + 1)));
        }
    }
    Ok(out)
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

/// Raw settings for one command plus bookkeeping of which keys were read.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
    /// Resolved `key=value` pairs that determine the outputs.
    resolved: BTreeMap<String, String>,
}

impl Settings {
    /// Loads `file` (if any), then applies the flag values on top.
    pub fn load(file: Option<&Path>, flags: Vec<(&str, Option<String>)>) -> Result<Self, CliError> {
        let mut values = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(normalize(k), v);
            }
        }
        Ok(Settings {
            values,
            ..Default::default()
        })
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.values.get(key).cloned()
    }

    /// Whether `key` was given, marking it as read.
    pub fn is_set(&mut self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        raw.parse()
            .map_err(|e| CliError::Config(format!("invalid value {raw:?} for {key}: {e}")))
    }

    /// Reads `key`, falling back to `default`; the value enters the config
    /// hash.
    pub fn get<T: FromStr + Display>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = match self.raw(key) {
            Some(raw) => Self::parse(key, &raw)?,
            None => default,
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = self.raw(key).map(|raw| Self::parse::<T>(key, &raw)).transpose()?;
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    /// A required file location. Locations stay out of the config hash, so
    /// a run reproduces byte for byte in another directory.
    pub fn path(&mut self, key: &str) -> Result<PathBuf, CliError> {
        self.raw(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Config(format!("missing required setting {key}")))
    }

    /// A setting that does not change the outputs (thread counts).
    pub fn untracked<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            Some(raw) => Self::parse(key, &raw),
            None => Ok(default),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + Display>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let v = match self.raw(key) {
            Some(raw) => raw
                .split(',')
                .map(|s| Self::parse(key, s.trim()))
                .collect::<Result<Vec<T>, _>>()?,
            None => default,
        };
        let text: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        self.resolved.insert(key.to_string(), text.join(","));
        Ok(v)
    }

    /// `seed` setting, else the environment variable, else 0.
    pub fn seed(&mut self) -> Result<u64, CliError> {
        let seed = match self.raw("seed") {
            Some(raw) => Self::parse("seed", &raw)?,
            None => match std::env::var(SEED_ENV) {
                Ok(raw) => raw
                    .trim()
                    .parse()
                    .map_err(|e| CliError::Config(format!("invalid {SEED_ENV} {raw:?}: {e}")))?,
                Err(_) => 0,
            },
        };
        self.resolved.insert("seed".into(), seed.to_string());
        Ok(seed)
    }

    /// Rejects keys that no setting read.
    pub fn finish(self) -> Result<Resolved, CliError> {
        let unknown: Vec<&String> = self.values.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
            return Err(CliError::Config(format!("unknown setting(s): {}", names.join(", "))));
        }
        Ok(Resolved(self.resolved))
    }
}

/// Settings after defaults were applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved(BTreeMap<String, String>);

impl Resolved {
    /// SHA-256 over the sorted `key=value` lines, hex.
    pub fn hash(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(format!("command={command}\n"));
        for (k, v) in &self.0 {
            h.update(format!("{k}={v}\n"));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Header text for output files.
    pub fn banner(&self, command: &str) -> String {
        format!(
            "sparse-rnn {} {command} config={}",
            env!("CARGO_PKG_VERSION"),
            &self.hash(command)[..16]
        )
    }

    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.0.iter().map(|(k, v)| format!("{k}={v}"))
    }
}
