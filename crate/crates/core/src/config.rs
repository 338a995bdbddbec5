//! System configuration and the `key=value` config-file format.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: `{value}`")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Exponential service-time parameters of one server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceParams {
    /// Mean service time of the mandatory part of every request (s).
    pub mandatory_mean: f64,
    /// Extra mean service time when the optional content is served (s).
    pub optional_mean: f64,
}

impl ServiceParams {
    /// Mean service time at a given dimmer setting.
    pub fn mean_at(&self, dimmer: f64) -> f64 {
        self.mandatory_mean + dimmer * self.optional_mean
    }
}

impl Default for ServiceParams {
    fn default() -> Self {
        Self {
            mandatory_mean: 0.02,
            optional_mean: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub max_servers: u32,
    pub boot_delay: f64,
    pub service: ServiceParams,
    pub control_period: f64,
    pub token_budget: usize,
    /// Response-time bar the manager steers for (s).
    pub rt_threshold: f64,
    pub initial_servers: u32,
    pub initial_dimmer: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            max_servers: 3,
            boot_delay: 120.0,
            service: ServiceParams::default(),
            control_period: 200.0,
            token_budget: 8192,
            rt_threshold: 0.1,
            initial_servers: 3,
            initial_dimmer: 0.9,
        }
    }
}

/// Splits `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl SystemConfig {
    /// Applies the keys this type owns and returns the ones it does not
    /// recognise so other sections can claim them.
    pub fn apply(
        &mut self,
        kv: &BTreeMap<String, String>,
    ) -> Result<BTreeMap<String, String>, ConfigError> {
        let mut rest = BTreeMap::new();
        for (k, v) in kv {
            match k.as_str() {
                "max_servers" => self.max_servers = parse_value(k, v)?,
                "boot_delay" => self.boot_delay = parse_value(k, v)?,
                "service_mandatory" => self.service.mandatory_mean = parse_value(k, v)?,
                "service_optional" => self.service.optional_mean = parse_value(k, v)?,
                "control_period" => self.control_period = parse_value(k, v)?,
                "token_budget" => self.token_budget = parse_value(k, v)?,
                "rt_threshold" => self.rt_threshold = parse_value(k, v)?,
                "initial_servers" => self.initial_servers = parse_value(k, v)?,
                "initial_dimmer" => self.initial_dimmer = parse_value(k, v)?,
                _ => {
                    rest.insert(k.clone(), v.clone());
                }
            }
        }
        self.validate()?;
        Ok(rest)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("boot_delay", self.boot_delay),
            ("service_mandatory", self.service.mandatory_mean),
            ("control_period", self.control_period),
            ("rt_threshold", self.rt_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be > 0")));
            }
        }
        if !(self.service.optional_mean >= 0.0) {
            return Err(ConfigError::Invalid("service_optional must be >= 0".into()));
        }
        if self.max_servers == 0 || self.token_budget == 0 {
            return Err(ConfigError::Invalid(
                "max_servers and token_budget must be > 0".into(),
            ));
        }
        if self.initial_servers == 0 || self.initial_servers > self.max_servers {
            return Err(ConfigError::Invalid(
                "initial_servers must be in 1..=max_servers".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.initial_dimmer) {
            return Err(ConfigError::Invalid(
                "initial_dimmer must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Canonical `key=value` rendering, sorted by key.
    pub fn to_kv(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert("boot_delay", self.boot_delay.to_string());
        kv.insert("control_period", self.control_period.to_string());
        kv.insert("initial_dimmer", self.initial_dimmer.to_string());
        kv.insert("initial_servers", self.initial_servers.to_string());
        kv.insert("max_servers", self.max_servers.to_string());
        kv.insert("rt_threshold", self.rt_threshold.to_string());
        kv.insert("service_mandatory", self.service.mandatory_mean.to_string());
        kv.insert("service_optional", self.service.optional_mean.to_string());
        kv.insert("token_budget", self.token_budget.to_string());
        kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(digest)[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies() {
        let kv =
            parse_kv("# comment\nmax_servers = 4\n\nboot_delay=60 # trailing\nrevenue_optional=2")
                .unwrap();
        let mut cfg = SystemConfig::default();
        let rest = cfg.apply(&kv).unwrap();
        assert_eq!(cfg.max_servers, 4);
        assert_eq!(cfg.boot_delay, 60.0);
        assert_eq!(rest.get("revenue_optional").map(String::as_str), Some("2"));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(parse_kv("nonsense"), Err(ConfigError::Syntax { line: 1 }));
        let mut cfg = SystemConfig::default();
        let kv = parse_kv("control_period=0").unwrap();
        assert!(matches!(cfg.apply(&kv), Err(ConfigError::Invalid(_))));
        let kv = parse_kv("max_servers=two").unwrap();
        assert!(matches!(cfg.apply(&kv), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn kv_rendering_round_trips() {
        let cfg = SystemConfig::default();
        let mut back = SystemConfig {
            max_servers: 9,
            initial_servers: 9,
            ..SystemConfig::default()
        };
        back.apply(&parse_kv(&cfg.to_kv()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
