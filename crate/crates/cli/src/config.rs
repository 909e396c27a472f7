//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use seigen::paillier::DEFAULT_KEY_BITS;
use seigen::protocol::ProtocolConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub gap: f64,
    pub key_bits: u64,
    /// Party matrix files; synthetic data is generated when empty.
    pub data: Vec<PathBuf>,
    pub key: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: ProtocolConfig::default(),
            k: 20,
            sizes: vec![15, 15],
            gap: 0.5,
            key_bits: DEFAULT_KEY_BITS,
            data: Vec::new(),
            key: None,
            transcript: None,
            output: None,
            labels: None,
        }
    }
}

fn config_err(line: usize, msg: impl Display) -> CliError {
    CliError::Config(format!("line {line}: {msg}"))
}

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    raw.parse().map_err(|e| config_err(line, format!("bad value for {key}: {e}")))
}

fn list<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    raw.split(',').map(|item| value(line, key, item.trim())).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| config_err(i + 1, "expected `key = value`"))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (i + 1, val.trim().to_string())).is_some() {
                return Err(config_err(i + 1, format!("duplicate key {key}")));
            }
        }

        let mut cfg = RunConfig::default();
        let mut parties = None;
        let mut padding = None;
        let path = |v: &str| base.join(v);
        for (key, (line, raw)) in &entries {
            let (line, raw) = (*line, raw.as_str());
            let p = &mut cfg.protocol;
            match key.as_str() {
                "parties" => parties = Some(value::<usize>(line, key, raw)?),
                "k" => cfg.k = value(line, key, raw)?,
                "sizes" => cfg.sizes = list(line, key, raw)?,
                "gap" => cfg.gap = value(line, key, raw)?,
                "key_bits" => cfg.key_bits = value(line, key, raw)?,
                "data" => cfg.data = raw.split(',').map(|s| path(s.trim())).collect(),
                "key" => cfg.key = Some(path(raw)),
                "transcript" => cfg.transcript = Some(path(raw)),
                "output" => cfg.output = Some(path(raw)),
                "labels" => cfg.labels = Some(path(raw)),
                "encryption" => p.encryption = value(line, key, raw)?,
                "scaling" => p.scaling = value(line, key, raw)?,
                "padding" => padding = (raw != "none").then(|| list::<f64>(line, key, raw)).transpose()?,
                "obfuscation_p" => p.obfuscation_p = value(line, key, raw)?,
                "noise_sigma" => p.noise_sigma = value(line, key, raw)?,
                "obfuscation_style" => {
                    p.obfuscation_style = raw.parse().map_err(|e| config_err(line, e))?;
                }
                "eps" => p.eps = value(line, key, raw)?,
                "max_rounds" => p.max_rounds = value(line, key, raw)?,
                "window" => p.window = value(line, key, raw)?,
                "repeat_count" => p.repeat_count = value(line, key, raw)?,
                "fraction_bits" => p.fraction_bits = value(line, key, raw)?,
                "scalar_range" => p.scalar_range = value(line, key, raw)?,
                "seed" => p.seed = value(line, key, raw)?,
                "session_id" => p.session_id = value(line, key, raw)?,
                other => return Err(config_err(line, format!("unknown key {other}"))),
            }
        }

        let n = if cfg.data.is_empty() { cfg.sizes.len() } else { cfg.data.len() };
        if let Some(declared) = parties {
            if declared != n {
                return Err(CliError::Config(format!("parties = {declared} but {n} data blocks configured")));
            }
        }
        if n < 2 {
            return Err(CliError::Config("at least two parties are required".into()));
        }
        if cfg.data.is_empty() && (cfg.k == 0 || cfg.sizes.contains(&0)) {
            return Err(CliError::Config("k and every size must be positive".into()));
        }
        if !(cfg.gap > 0.0 && cfg.gap < 1.0) {
            return Err(CliError::Config(format!("gap {} outside (0, 1)", cfg.gap)));
        }
        cfg.protocol.padding = match padding {
            Some(p) if p.len() == 1 => Some(vec![p[0]; n]),
            other => other,
        };
        if let Some(p) = &cfg.protocol.padding {
            if p.len() != n {
                return Err(CliError::Config(format!("{} padding scalars for {n} parties", p.len())));
            }
        }
        cfg.protocol.validate()?;
        Ok(cfg)
    }

    pub fn parties(&self) -> usize {
        if self.data.is_empty() {
            self.sizes.len()
        } else {
            self.data.len()
        }
    }
}
