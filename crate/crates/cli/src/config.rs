//! Plain-text `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use needlet_core::cltlab::BoundKind;
use needlet_core::scaling::{Constructor, Gamma, ScaleParams};

use crate::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "scale.p",
    "scale.gamma.kind",
    "scale.gamma.value",
    "scale.s0",
    "scale.constructor",
    "scale.j_max",
    "experiment.kind",
    "experiment.j",
    "experiment.nu",
    "experiment.reps",
    "experiment.seed",
    "experiment.alpha",
    "experiment.dim",
    "experiment.delta",
    "experiment.slack",
    "experiment.points",
    "output.dir",
    "output.format",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
    Both,
}

impl OutputFormat {
    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scale: ScaleParams,
    pub kind_name: String,
    pub levels: Vec<usize>,
    pub nus: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub dim: usize,
    pub delta: Option<f64>,
    pub slack: f64,
    pub points: usize,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn kind(&self) -> Result<BoundKind, CliError> {
        BoundKind::parse(&self.kind_name, self.dim, self.alpha)
            .map_err(|e| CliError::Config(format!("experiment.kind: {e}")))
    }
}

/// Raw key/value pairs. Later insertions replace earlier ones, so flag
/// overrides are applied after the file is read.
#[derive(Clone, Debug, Default)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kv = KeyValues::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
            let key = key.trim();
            if kv.0.contains_key(key) {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", no + 1)));
            }
            kv.set(key, value.trim())?;
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("{key}: cannot parse `{v}`"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                let items = v
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| CliError::Config(format!("{key}: cannot parse `{}`", s.trim())))
                    })
                    .collect::<Result<Vec<T>, _>>()?;
                if items.is_empty() {
                    return Err(CliError::Config(format!("{key}: empty list")));
                }
                Ok(items)
            }
        }
    }

    fn gamma(&self) -> Result<Gamma, CliError> {
        let kind = self.get("scale.gamma.kind").unwrap_or("constant");
        let value = self.get("scale.gamma.value");
        let scalar = |default: f64| -> Result<f64, CliError> {
            match value {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| CliError::Config(format!("scale.gamma.value: cannot parse `{v}`"))),
            }
        };
        Ok(match kind {
            "constant" => Gamma::Constant { c: scalar(2.0)? },
            "log_power" => Gamma::LogPower { a: scalar(1.0)? },
            "critical" => Gamma::Critical { eta: scalar(2.0)? },
            "tabulated" => Gamma::Tabulated {
                values: self.list("scale.gamma.value", Vec::new())?,
            },
            other => {
                return Err(CliError::Config(format!(
                    "scale.gamma.kind: unknown `{other}`, expected constant, log_power, critical or tabulated"
                )))
            }
        })
    }

    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let defaults = ScaleParams::default();
        let constructor = match self.get("scale.constructor").unwrap_or("recursive") {
            "recursive" => Constructor::Recursive,
            "closed_form" => Constructor::ClosedForm,
            other => {
                return Err(CliError::Config(format!(
                    "scale.constructor: unknown `{other}`, expected recursive or closed_form"
                )))
            }
        };
        let scale = ScaleParams {
            p: self.num("scale.p", defaults.p)?,
            gamma: self.gamma()?,
            s0: self.num("scale.s0", defaults.s0)?,
            constructor,
            j_max: self.num("scale.j_max", defaults.j_max)?,
        };
        scale.validate().map_err(|e| crate::core_error(e, "scale"))?;
        let format = match self.get("output.format").unwrap_or("both") {
            "json" => OutputFormat::Json,
            "csv" => OutputFormat::Csv,
            "both" => OutputFormat::Both,
            other => {
                return Err(CliError::Config(format!(
                    "output.format: unknown `{other}`, expected json, csv or both"
                )))
            }
        };
        let delta = match self.get("experiment.delta") {
            None => None,
            Some(_) => Some(self.num("experiment.delta", 0.0)?),
        };
        let default_j = 3.min(scale.j_max);
        let cfg = RunConfig {
            scale,
            kind_name: self.get("experiment.kind").unwrap_or("fdd_1d").to_string(),
            levels: self.list("experiment.j", vec![default_j])?,
            nus: self.list("experiment.nu", vec![100.0])?,
            reps: self.num("experiment.reps", 1000)?,
            seed: self.num("experiment.seed", 1)?,
            alpha: self.num("experiment.alpha", 1.0)?,
            dim: self.num("experiment.dim", 2)?,
            delta,
            slack: self.num("experiment.slack", 1.0)?,
            points: self.num("experiment.points", 1)?,
            out_dir: PathBuf::from(self.get("output.dir").unwrap_or(".")),
            format,
        };
        if let Some(nu) = cfg.nus.iter().find(|nu| !(nu.is_finite() && **nu > 0.0)) {
            return Err(CliError::Config(format!(
                "experiment.nu: intensities must be positive, got {nu}"
            )));
        }
        if let Some(j) = cfg.levels.iter().find(|&&j| j == 0 || j > cfg.scale.j_max) {
            return Err(CliError::Config(format!(
                "experiment.j: level {j} outside 1..={}",
                cfg.scale.j_max
            )));
        }
        if !(cfg.slack > 0.0 && cfg.slack <= 1.0) {
            return Err(CliError::Config(format!(
                "experiment.slack: must lie in (0, 1], got {}",
                cfg.slack
            )));
        }
        Ok(cfg)
    }
}
