//! Flat `key = value` run configuration.
//!
//! Every key is optional; omitted keys take their defaults. `dump` writes
//! every key in a fixed order, and `parse_config(dump(c)) == c`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::bridge::{BridgeConfig, EncodeGuidance};
use crate::domains::{Dose, PointGenerator, Style};
use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Points,
    Phantom,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::Points => "points",
            DataKind::Phantom => "phantom",
        }
    }
}

impl FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "points" => Ok(DataKind::Points),
            "phantom" => Ok(DataKind::Phantom),
            _ => Err(Error::Config(format!("unknown data kind `{s}` (points | phantom)"))),
        }
    }
}

/// Dataset description shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub kind: DataKind,
    /// Generator names for points, `style/dose` pairs for phantoms; index = label.
    pub domains: Vec<String>,
    /// Samples per domain for points; distinct poses drawn from the grid for phantoms.
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
    pub resolution: usize,
    pub shots: usize,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::Points,
            domains: vec!["two_moons".into(), "two_rings".into()],
            n: 2000,
            noise: 0.05,
            seed: 0,
            resolution: 32,
            shots: 1,
            test_fraction: 0.15,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains.len() < 2 {
            return Err(Error::Config(format!("need at least 2 domains, got {}", self.domains.len())));
        }
        for d in &self.domains {
            match self.kind {
                DataKind::Points => {
                    d.parse::<PointGenerator>()?;
                }
                DataKind::Phantom => {
                    parse_phantom_domain(d)?;
                }
            }
        }
        if self.n == 0 || self.shots == 0 {
            return Err(Error::Config("n and shots must be positive".into()));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.resolution < 7 {
            return Err(Error::Config(format!("resolution must be at least 7, got {}", self.resolution)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        Ok(())
    }
}

/// Splits a `style/dose` domain name.
pub fn parse_phantom_domain(name: &str) -> Result<(Style, Dose)> {
    let (s, d) = name
        .split_once('/')
        .ok_or_else(|| Error::Config(format!("phantom domain `{name}` must look like style/dose")))?;
    Ok((s.parse()?, d.parse()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub bridge: BridgeConfig,
    pub hidden: Vec<usize>,
    /// Sample with the EMA weights instead of the live ones.
    pub use_ema: bool,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            bridge: BridgeConfig::default(),
            hidden: vec![256, 256],
            use_ema: true,
            data: DataConfig::default(),
        }
    }
}

pub const CONFIG_KEYS: [&str; 22] = [
    "learning_rate",
    "batch_size",
    "epochs",
    "warmup_steps",
    "label_dropout",
    "ema_rate",
    "seed",
    "checkpoint_every",
    "tau",
    "steps",
    "guidance_weight",
    "encode_guidance",
    "hidden",
    "use_ema",
    "data.kind",
    "data.domains",
    "data.n",
    "data.noise",
    "data.seed",
    "data.resolution",
    "data.shots",
    "data.test_fraction",
];

fn num<T: FromStr>(key: &str, value: &str, ty: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("`{key}` expects {ty}, got `{value}`"))
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let real = "a real number";
        let count = "a non-negative integer";
        match key {
            "learning_rate" => self.train.learning_rate = num(key, value, real)?,
            "batch_size" => self.train.batch_size = num(key, value, count)?,
            "epochs" => self.train.epochs = num(key, value, count)?,
            "warmup_steps" => self.train.warmup_steps = num(key, value, count)?,
            "label_dropout" => self.train.label_dropout = num(key, value, real)?,
            "ema_rate" => self.train.ema_rate = num(key, value, real)?,
            "seed" => self.train.seed = num(key, value, count)?,
            "checkpoint_every" => {
                self.train.checkpoint_every = match value {
                    "auto" => None,
                    v => Some(num(key, v, "a positive integer or `auto`")?),
                }
            }
            "tau" => self.bridge.tau = num(key, value, real)?,
            "steps" => self.bridge.steps = num(key, value, count)?,
            "guidance_weight" => self.bridge.guidance_weight = num(key, value, real)?,
            "encode_guidance" => {
                self.bridge.encode_guidance = num::<EncodeGuidance>(key, value, "`guided` or `conditional`")?
            }
            "hidden" => {
                self.hidden = list(value)
                    .iter()
                    .map(|w| num::<usize>(key, w, "a comma-separated list of positive integers"))
                    .collect::<std::result::Result<_, _>>()?;
                if self.hidden.is_empty() || self.hidden.contains(&0) {
                    return Err(format!("`hidden` needs positive widths, got `{value}`"));
                }
            }
            "use_ema" => self.use_ema = num(key, value, "`true` or `false`")?,
            "data.kind" => self.data.kind = value.parse::<DataKind>().map_err(|e| e.to_string())?,
            "data.domains" => self.data.domains = list(value),
            "data.n" => self.data.n = num(key, value, count)?,
            "data.noise" => self.data.noise = num(key, value, real)?,
            "data.seed" => self.data.seed = num(key, value, count)?,
            "data.resolution" => self.data.resolution = num(key, value, count)?,
            "data.shots" => self.data.shots = num(key, value, count)?,
            "data.test_fraction" => self.data.test_fraction = num(key, value, real)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let t = &self.train;
        let b = &self.bridge;
        let d = &self.data;
        match key {
            "learning_rate" => t.learning_rate.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "epochs" => t.epochs.to_string(),
            "warmup_steps" => t.warmup_steps.to_string(),
            "label_dropout" => t.label_dropout.to_string(),
            "ema_rate" => t.ema_rate.to_string(),
            "seed" => t.seed.to_string(),
            "checkpoint_every" => t.checkpoint_every.map_or("auto".into(), |v| v.to_string()),
            "tau" => b.tau.to_string(),
            "steps" => b.steps.to_string(),
            "guidance_weight" => b.guidance_weight.to_string(),
            "encode_guidance" => b.encode_guidance.to_string(),
            "hidden" => self.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "use_ema" => self.use_ema.to_string(),
            "data.kind" => d.kind.name().into(),
            "data.domains" => d.domains.join(","),
            "data.n" => d.n.to_string(),
            "data.noise" => d.noise.to_string(),
            "data.seed" => d.seed.to_string(),
            "data.resolution" => d.resolution.to_string(),
            "data.shots" => d.shots.to_string(),
            "data.test_fraction" => d.test_fraction.to_string(),
            _ => unreachable!("not a config key: {key}"),
        }
    }

    /// Normalized document with every key, in `CONFIG_KEYS` order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.bridge.validate()?;
        self.data.validate()
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::ConfigLine { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(prev) = seen.insert(key.to_string(), line) {
            return Err(err(format!("duplicate key `{key}` (first set on line {prev})")));
        }
        cfg.set(key, value).map_err(err)?;
        // range checks are per section, so a violation is pinned to the line that caused it
        let check = match key.split_once('.') {
            Some(("data", _)) if key != "data.kind" && key != "data.domains" => cfg.data.validate(),
            Some(_) => Ok(()),
            None => cfg.train.validate().and(cfg.bridge.validate()),
        };
        check.map_err(|e| err(e.to_string()))?;
    }
    // kind and domains depend on each other, so they are checked once both are known
    cfg.data.validate().map_err(|e| match seen.get("data.domains").or(seen.get("data.kind")) {
        Some(&line) => Error::ConfigLine {
            line,
            message: e.to_string(),
        },
        None => e,
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_is_read() {
        assert_eq!(parse_config("tau=0.45").unwrap().bridge.tau, 0.45);
        assert_eq!(parse_config("tau = 0.3 # comment").unwrap().bridge.tau, 0.3);
    }

    #[test]
    fn range_error_names_line() {
        match parse_config("# header\nlabel_dropout=1.5\n") {
            Err(Error::ConfigLine { line: 2, message }) => assert!(message.contains("label_dropout"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_type_errors() {
        assert!(matches!(parse_config("\n\nfoo = 1"), Err(Error::ConfigLine { line: 3, .. })));
        match parse_config("steps = many") {
            Err(Error::ConfigLine { line: 1, message }) => assert!(message.contains("steps"), "{message}"),
            other => panic!("{other:?}"),
        }
        assert!(parse_config("tau 0.3").is_err());
        assert!(parse_config("tau=0.3\ntau=0.4").is_err());
    }

    #[test]
    fn empty_file_is_default_fixed_point() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        let dumped = c.dump();
        assert_eq!(parse_config(&dumped).unwrap(), c);
        assert_eq!(parse_config(&dumped).unwrap().dump(), dumped);
    }

    #[test]
    fn phantom_domains_checked_against_kind() {
        let ok = parse_config("data.domains = synthetic/normal, real/low\ndata.kind = phantom").unwrap();
        assert_eq!(ok.data.domains, vec!["synthetic/normal", "real/low"]);
        match parse_config("data.domains = synthetic/normal,real/low") {
            Err(Error::ConfigLine { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn awkward_values_round_trip() {
        let text = "learning_rate = 0.0003\nguidance_weight = 0.1\nhidden = 7,3,9\ncheckpoint_every = 17\nuse_ema = false\ndata.noise = 0.1\nencode_guidance = conditional\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.train.checkpoint_every, Some(17));
        assert_eq!(parse_config(&c.dump()).unwrap(), c);
    }
}
