//! Run configuration files and grid range syntax.
//!
//! A configuration is a flat TOML table:
//!
//! ```toml
//! n = 6
//! radius = 1
//! alpha = 0.3
//! h = 0.025
//! k = 1.0
//! f = 7.5
//! omega = 1.0
//! dt_per_period = 200
//! ic_seed = 42
//! ic_range = [-1.0, 1.0]
//! ```
//!
//! Every key is optional and falls back to its default. Detector keys
//! `time_limit`, `confirm_samples`, `std_threshold`, `buffer_capacity` and
//! `sync_threshold` are accepted as well. Unknown keys are rejected.

use serde::Serialize;
use toml::{Table, Value};

use crate::detector::DetectorOptions;
use crate::error::{Error, Result};
use crate::model::{IcRange, NetworkSpec, NodeParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub radius: usize,
    pub alpha: f64,
    pub h: f64,
    pub k: f64,
    pub f: f64,
    pub omega: f64,
    pub dt_per_period: usize,
    pub ic_seed: Option<u64>,
    pub ic_range: [f64; 2],
    pub time_limit: f64,
    pub confirm_samples: usize,
    pub std_threshold: f64,
    pub buffer_capacity: usize,
    pub sync_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let node = NodeParams::default();
        let det = DetectorOptions::default();
        RunConfig {
            n: 6,
            radius: 1,
            alpha: 0.0,
            h: node.h,
            k: node.k,
            f: node.f,
            omega: node.omega,
            dt_per_period: det.steps_per_period,
            ic_seed: None,
            ic_range: [-1.0, 1.0],
            time_limit: det.time_limit,
            confirm_samples: det.confirm_samples,
            std_threshold: det.tdle.std_threshold,
            buffer_capacity: det.tdle.buffer_capacity,
            sync_threshold: det.tdle.sync_threshold,
        }
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(config_err(key, format!("expected a number, found {}", other.type_str()))),
    }
}

fn as_count(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(config_err(key, format!("{i} must be non-negative"))),
        other => Err(config_err(key, format!("expected an integer, found {}", other.type_str()))),
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 15] = [
        "n",
        "radius",
        "alpha",
        "h",
        "k",
        "f",
        "omega",
        "dt_per_period",
        "ic_seed",
        "ic_range",
        "time_limit",
        "confirm_samples",
        "std_threshold",
        "buffer_capacity",
        "sync_threshold",
    ];

    /// Parses and validates a configuration file's contents.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Config {
                key: "<file>".into(),
                reason: e.message().to_string(),
            }
        })?;
        let mut cfg = RunConfig::default();
        for (key, v) in &table {
            let key = key.as_str();
            match key {
                "n" => cfg.n = as_count(key, v)?,
                "radius" => cfg.radius = as_count(key, v)?,
                "alpha" => cfg.alpha = as_f64(key, v)?,
                "h" => cfg.h = as_f64(key, v)?,
                "k" => cfg.k = as_f64(key, v)?,
                "f" => cfg.f = as_f64(key, v)?,
                "omega" => cfg.omega = as_f64(key, v)?,
                "dt_per_period" => cfg.dt_per_period = as_count(key, v)?,
                "ic_seed" => cfg.ic_seed = Some(as_count(key, v)? as u64),
                "ic_range" => {
                    let arr = v
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .ok_or_else(|| config_err(key, "expected [lo, hi]"))?;
                    cfg.ic_range = [as_f64(key, &arr[0])?, as_f64(key, &arr[1])?];
                }
                "time_limit" => cfg.time_limit = as_f64(key, v)?,
                "confirm_samples" => cfg.confirm_samples = as_count(key, v)?,
                "std_threshold" => cfg.std_threshold = as_f64(key, v)?,
                "buffer_capacity" => cfg.buffer_capacity = as_count(key, v)?,
                "sync_threshold" => cfg.sync_threshold = as_f64(key, v)?,
                _ => return Err(config_err(key, "unknown key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every value, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(config_err("n", format!("{} must be >= 2", self.n)));
        }
        if self.radius < 1 || self.radius > self.n / 2 {
            return Err(config_err(
                "radius",
                format!("{} must lie in 1..={}", self.radius, self.n / 2),
            ));
        }
        if !self.alpha.is_finite() {
            return Err(config_err("alpha", "must be finite"));
        }
        self.validate_common()
    }

    /// Checks everything except the network shape (`n`, `radius`, `alpha`).
    pub fn validate_common(&self) -> Result<()> {
        self.node().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => config_err(name, reason),
            other => other,
        })?;
        let [lo, hi] = self.ic_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(config_err("ic_range", "lo and hi must be finite with lo <= hi"));
        }
        if self.dt_per_period == 0 {
            return Err(config_err("dt_per_period", "must be >= 1"));
        }
        if !(self.time_limit > 0.0 && self.time_limit.is_finite()) {
            return Err(config_err("time_limit", "must be finite and > 0"));
        }
        if self.confirm_samples == 0 {
            return Err(config_err("confirm_samples", "must be >= 1"));
        }
        if !(self.std_threshold > 0.0 && self.std_threshold.is_finite()) {
            return Err(config_err("std_threshold", "must be finite and > 0"));
        }
        if self.buffer_capacity < 2 {
            return Err(config_err("buffer_capacity", "must be >= 2"));
        }
        if !(self.sync_threshold > 0.0 && self.sync_threshold.is_finite()) {
            return Err(config_err("sync_threshold", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn node(&self) -> Result<NodeParams> {
        NodeParams::new(self.h, self.k, self.f, self.omega)
    }

    pub fn ic_range(&self) -> IcRange {
        IcRange {
            lo: self.ic_range[0],
            hi: self.ic_range[1],
        }
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        NetworkSpec::ring(self.n, self.radius, self.alpha, self.node()?)
    }

    pub fn detector(&self) -> DetectorOptions {
        let mut d = DetectorOptions {
            steps_per_period: self.dt_per_period,
            time_limit: self.time_limit,
            confirm_samples: self.confirm_samples,
            ..DetectorOptions::default()
        };
        d.tdle.std_threshold = self.std_threshold;
        d.tdle.buffer_capacity = self.buffer_capacity;
        d.tdle.sync_threshold = self.sync_threshold;
        d
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses a grid specification: `lo:hi:step`, a comma list, or a single value.
///
/// A range yields `lo + k·step` for every `k` with `lo + k·step < hi`, where a
/// point within `1e-9·step` of `hi` counts as reaching it and is dropped.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let num = |s: &str| -> Result<f64> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("`{s}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Parse(format!("`{s}` is not finite")))
        }
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("range `{text}` must be lo:hi:step")));
        }
        let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) {
            return Err(Error::Parse(format!("range step {step} must be > 0")));
        }
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let v = lo + k as f64 * step;
            if v >= hi - 1e-9 * step {
                break;
            }
            out.push(v);
            k += 1;
        }
        Ok(out)
    } else {
        text.split(',').map(num).collect()
    }
}

/// Parses a comma list of non-negative integers.
pub fn parse_counts(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("`{}` is not a non-negative integer", s.trim())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::from_toml("n = 8\nradius = 2\nalpha = 0.25\nic_range = [-0.5, 0.5]\n").unwrap();
        assert_eq!(cfg.n, 8);
        assert_eq!(cfg.radius, 2);
        assert_eq!(cfg.ic_range(), IcRange { lo: -0.5, hi: 0.5 });
        assert_eq!(cfg.h, 0.025);
        assert_eq!(cfg.detector().steps_per_period, 200);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_keys_are_named() {
        let key_of = |text: &str| match RunConfig::from_toml(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key_of("n = 6\nradius = \"one\"\n"), "radius");
        assert_eq!(key_of("colour = 1\n"), "colour");
        assert_eq!(key_of("n = 6\nradius = 4\n"), "radius");
        assert_eq!(key_of("omega = -1.0\n"), "omega");
        assert_eq!(key_of("ic_range = [1.0]\n"), "ic_range");
        assert_eq!(key_of("n = \n"), "<file>");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75]);
        let v = parse_range("0:2:0.01").unwrap();
        assert_eq!(v.len(), 200);
        assert!((v[199] - 1.99).abs() < 1e-12);
        assert_eq!(parse_range("0:1:0.02").unwrap().len(), 50);
        assert_eq!(parse_range("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_range("1,2, 3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("0:1:0").is_err());
        assert!(parse_range("abc").is_err());
        assert_eq!(parse_counts("1,2,3,4").unwrap(), vec![1, 2, 3, 4]);
        assert!(parse_counts("1,-2").is_err());
    }
}
