//! Flag/config-file resolution. Every option has a config key equal to its
//! long flag name; `_` and `-` are interchangeable in files. Flags win.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use pim_core::training::parse_kv;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    /// Reads a `key=value` file, or the `config` object of a run manifest.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = crate::io::read(path)?;
        let mut file = BTreeMap::new();
        if text.trim_start().starts_with('{') {
            let json: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let obj = json
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| CliError::config(format!("{}: manifest has no config object", path.display())))?;
            for (k, v) in obj {
                let v = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                file.insert(normalize(k), v);
            }
        } else {
            for (k, v) in parse_kv(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))? {
                file.insert(normalize(&k), v);
            }
        }
        Ok(Self { file, ..Self::default() })
    }

    fn from_file<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        self.used.insert(key.to_string());
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| CliError::config(format!("bad value `{raw}` for config key {key}"))),
        }
    }

    fn record<T: Display>(&mut self, key: &str, v: &T) {
        self.resolved.insert(key.to_string(), v.to_string());
    }

    pub fn opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        self.used.insert(key.to_string());
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.opt(key, flag)?.ok_or_else(|| CliError::usage(format!("missing required option --{key}")))
    }

    /// Whether `key` was given by flag or file.
    pub fn explicit<T>(&self, key: &str, flag: &Option<T>) -> bool {
        flag.is_some() || self.file.contains_key(key)
    }

    /// Rejects file keys that no option of the subcommand consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        match self.file.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(CliError::config(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}
