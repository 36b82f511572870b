//! Operator configuration: command-line flags layered over an optional
//! `key=value` file named by `PPRAG_CONFIG`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const CONFIG_ENV: &str = "PPRAG_CONFIG";

/// Keys accepted in the config file.
pub const KNOWN_KEYS: &[&str] = &[
    "key",
    "payload_key",
    "store",
    "addr",
    "beta",
    "k",
    "radius",
    "seed",
    "dim",
    "format",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    pub key: Option<PathBuf>,
    pub payload_key: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub addr: Option<String>,
    pub beta: Option<f64>,
    pub k: Option<usize>,
    pub radius: Option<f64>,
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub format: Option<String>,
}

fn parse_field<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Param(format!("config line {line}: bad value {value:?} for {key}")))
}

impl CliConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: HashMap<&str, (&str, usize)> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Param(format!("config line {}: expected key=value", i + 1))
            })?;
            let k = k.trim();
            let k = if k == "payload-key" { "payload_key" } else { k };
            if !KNOWN_KEYS.contains(&k) {
                return Err(Error::Param(format!(
                    "config line {}: unknown key {k:?}",
                    i + 1
                )));
            }
            raw.insert(k, (v.trim(), i + 1));
        }
        let path = |k: &str| raw.get(k).map(|(v, _)| PathBuf::from(v));
        let text = |k: &str| raw.get(k).map(|(v, _)| (*v).to_owned());
        Ok(Self {
            key: path("key"),
            payload_key: path("payload_key"),
            store: path("store"),
            addr: text("addr"),
            beta: raw
                .get("beta")
                .map(|(v, l)| parse_field("beta", v, *l))
                .transpose()?,
            k: raw
                .get("k")
                .map(|(v, l)| parse_field("k", v, *l))
                .transpose()?,
            radius: raw
                .get("radius")
                .map(|(v, l)| parse_field("radius", v, *l))
                .transpose()?,
            seed: raw
                .get("seed")
                .map(|(v, l)| parse_field("seed", v, *l))
                .transpose()?,
            dim: raw
                .get("dim")
                .map(|(v, l)| parse_field("dim", v, *l))
                .transpose()?,
            format: text("format"),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Reads the file named by `PPRAG_CONFIG`, or an empty config.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }

    /// Fields set in `self` win over `fallback`.
    pub fn or(self, fallback: Self) -> Self {
        Self {
            key: self.key.or(fallback.key),
            payload_key: self.payload_key.or(fallback.payload_key),
            store: self.store.or(fallback.store),
            addr: self.addr.or(fallback.addr),
            beta: self.beta.or(fallback.beta),
            k: self.k.or(fallback.k),
            radius: self.radius.or(fallback.radius),
            seed: self.seed.or(fallback.seed),
            dim: self.dim.or(fallback.dim),
            format: self.format.or(fallback.format),
        }
    }
}
