//! Run configuration: command-line flags override `key = value` lines from
//! a config file, which override built-in defaults.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Resolver {
    file: HashMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(subcommand: &str, config: Option<&Path>) -> Result<Resolver, CliError> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => HashMap::new(),
        };
        let mut r = Resolver {
            file,
            resolved: BTreeMap::new(),
        };
        r.record("subcommand", subcommand);
        Ok(r)
    }

    /// Resolves `key`, recording the value used.
    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw
                    .parse()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))?,
                None => default,
            },
        };
        self.record(key, &value);
        Ok(value)
    }

    pub fn record(&mut self, key: &str, value: impl Display) {
        self.resolved.insert(key.to_owned(), value.to_string());
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    /// Logs the resolved configuration and warns about unused file keys.
    pub fn log(&self) {
        for (k, v) in &self.resolved {
            log::info!("config {k} = {v}");
        }
        for k in self.file.keys().filter(|k| !self.resolved.contains_key(*k)) {
            log::warn!("config key `{k}` is not used by this subcommand");
        }
    }
}

pub fn parse_config(text: &str) -> Result<HashMap<String, String>, CliError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
        out.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(out)
}
