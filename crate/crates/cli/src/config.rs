//! Experiment configuration.
//!
//! The file format is flat `key = value` lines. Lists are comma separated,
//! `#` starts a comment, and unknown keys are rejected. Every key is
//! optional; [`ExperimentConfig::default`] holds the defaults.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_owned(), message: message.into() }
}

/// One entry of the privacy sweep; `inf` selects the non-private policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpsilonSetting {
    Private(f64),
    NonPrivate,
}

impl EpsilonSetting {
    /// Stable integer used as the seed-path index of this setting.
    pub fn seed_index(self) -> u64 {
        match self {
            EpsilonSetting::Private(e) => e.to_bits(),
            EpsilonSetting::NonPrivate => f64::INFINITY.to_bits(),
        }
    }

    /// Numeric value, with the non-private setting mapped to +inf.
    pub fn value(self) -> f64 {
        match self {
            EpsilonSetting::Private(e) => e,
            EpsilonSetting::NonPrivate => f64::INFINITY,
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        let t = token.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Some(EpsilonSetting::NonPrivate);
        }
        match t.parse::<f64>() {
            Ok(e) if e > 0.0 && e.is_finite() => Some(EpsilonSetting::Private(e)),
            _ => None,
        }
    }
}

impl fmt::Display for EpsilonSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSetting::Private(e) => write!(f, "{e}"),
            EpsilonSetting::NonPrivate => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dimensions: Vec<usize>,
    pub epsilons: Vec<EpsilonSetting>,
    pub delta: f64,
    pub s_star: usize,
    pub arms: usize,
    pub horizon: u64,
    pub repetitions: usize,
    pub root_seed: u64,
    pub x_max: f64,
    pub ar_phi: f64,
    /// Standard deviation of the reward noise.
    pub noise_sigma: f64,
    /// Magnitude of each nonzero of β*; `None` means `1/sqrt(s_star)`, zero gives β* = 0.
    pub beta_magnitude: Option<f64>,
    /// Policy sparsity; `None` means `s_star`.
    pub sparsity: Option<usize>,
    pub m_max: usize,
    /// `None` means `max(1, ln K)`.
    pub kappa_bar: Option<f64>,
    /// `None` means `1/K`.
    pub kappa_under: Option<f64>,
    /// Forces every cell onto the non-private policy.
    pub non_private: bool,
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dimensions: vec![400, 800, 1600, 2800],
            epsilons: vec![
                EpsilonSetting::Private(0.8),
                EpsilonSetting::Private(2.0),
                EpsilonSetting::Private(5.0),
            ],
            delta: 0.01,
            s_star: 10,
            arms: 3,
            horizon: 30_000,
            repetitions: 10,
            root_seed: 2024,
            x_max: 10.0,
            ar_phi: 0.3,
            noise_sigma: 0.1f64.sqrt(),
            beta_magnitude: None,
            sparsity: None,
            m_max: 50,
            kappa_bar: None,
            kappa_under: None,
            non_private: false,
            parallelism: 1,
        }
    }
}

/// Keys accepted in config files, with a one-line description each.
pub const KEYS: &[(&str, &str)] = &[
    ("dimensions", "comma-separated ambient dimensions d [400,800,1600,2800]"),
    ("epsilons", "comma-separated privacy levels; `inf` = non-private [0.8,2,5]"),
    ("delta", "privacy delta [0.01]"),
    ("s_star", "true sparsity of beta* [10]"),
    ("arms", "number of arms K [3]"),
    ("horizon", "number of rounds T [30000]"),
    ("repetitions", "independent repetitions per cell [10]"),
    ("root_seed", "root of every seed path [2024]"),
    ("x_max", "context clamp |x_j| <= x_max [10]"),
    ("ar_phi", "AR(1) design parameter [0.3]"),
    ("noise_sigma", "reward noise standard deviation [sqrt(0.1)]"),
    ("beta_magnitude", "|beta*_j| on the support [1/sqrt(s_star)]; 0 gives beta* = 0"),
    ("sparsity", "policy sparsity s [s_star]"),
    ("m_max", "cap on N-IHT iterations per refit [50]"),
    ("kappa_bar", "upper curvature bound [max(1, ln K)]"),
    ("kappa_under", "lower curvature bound [1/K]"),
    ("non_private", "run every cell without privacy noise [false]"),
    ("parallelism", "worker threads for the sweep [1]"),
];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dimensions" => self.dimensions = parse_list(key, value)?,
            "epsilons" => {
                self.epsilons = split_list(value)
                    .map(|t| {
                        EpsilonSetting::parse(t)
                            .ok_or_else(|| field_err(key, format!("`{t}` is not a positive number or `inf`")))
                    })
                    .collect::<Result<_, _>>()?
            }
            "delta" => self.delta = parse_one(key, value)?,
            "s_star" => self.s_star = parse_one(key, value)?,
            "arms" => self.arms = parse_one(key, value)?,
            "horizon" => self.horizon = parse_one(key, value)?,
            "repetitions" => self.repetitions = parse_one(key, value)?,
            "root_seed" => self.root_seed = parse_one(key, value)?,
            "x_max" => self.x_max = parse_one(key, value)?,
            "ar_phi" => self.ar_phi = parse_one(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_one(key, value)?,
            "beta_magnitude" => self.beta_magnitude = Some(parse_one(key, value)?),
            "sparsity" => self.sparsity = Some(parse_one(key, value)?),
            "m_max" => self.m_max = parse_one(key, value)?,
            "kappa_bar" => self.kappa_bar = Some(parse_one(key, value)?),
            "kappa_under" => self.kappa_under = Some(parse_one(key, value)?),
            "non_private" => self.non_private = parse_one(key, value)?,
            "parallelism" => self.parallelism = parse_one(key, value)?,
            _ => return Err(field_err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dimensions.is_empty() {
            return Err(field_err("dimensions", "must list at least one dimension"));
        }
        if self.epsilons.is_empty() {
            return Err(field_err("epsilons", "must list at least one privacy level"));
        }
        if let Some(d) = self.dimensions.iter().find(|&&d| d < self.s_star.max(1)) {
            return Err(field_err("dimensions", format!("dimension {d} is below s_star = {}", self.s_star)));
        }
        let mut sorted = self.dimensions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.dimensions.len() {
            return Err(field_err("dimensions", "dimensions must be distinct"));
        }
        for (i, e) in self.epsilons.iter().enumerate() {
            if self.epsilons[..i].contains(e) {
                return Err(field_err("epsilons", format!("`{e}` listed twice")));
            }
        }
        if !(0.0..1.0).contains(&self.delta) || (self.delta == 0.0 && self.has_private_cells()) {
            return Err(field_err("delta", "must lie in (0, 1)"));
        }
        if self.s_star == 0 {
            return Err(field_err("s_star", "must be at least 1"));
        }
        if self.arms < 2 {
            return Err(field_err("arms", "need at least two arms"));
        }
        if self.horizon == 0 {
            return Err(field_err("horizon", "must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(field_err("repetitions", "must be at least 1"));
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return Err(field_err("x_max", "must be positive"));
        }
        if !(self.ar_phi > -1.0 && self.ar_phi < 1.0) {
            return Err(field_err("ar_phi", "must lie in (-1, 1)"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(field_err("noise_sigma", "must be >= 0"));
        }
        if let Some(m) = self.beta_magnitude {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(field_err("beta_magnitude", "must be >= 0"));
            }
        }
        if let Some(s) = self.sparsity {
            if s == 0 || self.dimensions.iter().any(|&d| s > d) {
                return Err(field_err("sparsity", "must lie in [1, min(dimensions)]"));
            }
        }
        if self.m_max == 0 {
            return Err(field_err("m_max", "must be at least 1"));
        }
        if !(self.kappa_bar() > 0.0) || !(self.kappa_under() > 0.0) {
            return Err(field_err("kappa_bar", "curvature bounds must be positive"));
        }
        if self.kappa_bar() < self.kappa_under() {
            return Err(field_err("kappa_under", "must not exceed kappa_bar"));
        }
        if self.parallelism == 0 {
            return Err(field_err("parallelism", "must be at least 1"));
        }
        Ok(())
    }

    fn has_private_cells(&self) -> bool {
        !self.non_private && self.epsilons.iter().any(|e| matches!(e, EpsilonSetting::Private(_)))
    }

    pub fn beta_magnitude(&self) -> f64 {
        self.beta_magnitude.unwrap_or(1.0 / (self.s_star as f64).sqrt())
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity.unwrap_or(self.s_star)
    }

    pub fn kappa_bar(&self) -> f64 {
        self.kappa_bar.unwrap_or_else(|| (self.arms as f64).ln().max(1.0))
    }

    pub fn kappa_under(&self) -> f64 {
        self.kappa_under.unwrap_or(1.0 / self.arms as f64)
    }

    /// The fully resolved configuration as `key = value` lines, parseable by
    /// [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let lines = [
            ("dimensions", join(self.dimensions.iter().map(|d| d.to_string()).collect())),
            ("epsilons", join(self.epsilons.iter().map(|e| e.to_string()).collect())),
            ("delta", self.delta.to_string()),
            ("s_star", self.s_star.to_string()),
            ("arms", self.arms.to_string()),
            ("horizon", self.horizon.to_string()),
            ("repetitions", self.repetitions.to_string()),
            ("root_seed", self.root_seed.to_string()),
            ("x_max", self.x_max.to_string()),
            ("ar_phi", self.ar_phi.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("beta_magnitude", self.beta_magnitude().to_string()),
            ("sparsity", self.sparsity().to_string()),
            ("m_max", self.m_max.to_string()),
            ("kappa_bar", self.kappa_bar().to_string()),
            ("kappa_under", self.kappa_under().to_string()),
            ("non_private", self.non_private.to_string()),
            ("parallelism", self.parallelism.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| field_err(key, format!("cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    split_list(value).map(|t| parse_one(key, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# desk run\ndimensions = 50, 100\nepsilons = 0.5,inf\nhorizon=64 # short\nnon_private = false\n",
        )
        .unwrap();
        assert_eq!(cfg.dimensions, vec![50, 100]);
        assert_eq!(cfg.epsilons, vec![EpsilonSetting::Private(0.5), EpsilonSetting::NonPrivate]);
        assert_eq!(cfg.horizon, 64);
        assert_eq!(cfg.s_star, 10);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::parse("repetitions = 0").unwrap_err();
        assert!(err.to_string().contains("repetitions"), "{err}");
        let err = ExperimentConfig::parse("epsilons = 1, -2").unwrap_err();
        assert!(err.to_string().contains("epsilons"), "{err}");
        let err = ExperimentConfig::parse("dimensions =").unwrap_err();
        assert!(err.to_string().contains("dimensions"), "{err}");
        let err = ExperimentConfig::parse("colour = blue").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        assert!(matches!(ExperimentConfig::parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = ExperimentConfig::parse("dimensions = 20,40\nepsilons = 2,inf\nkappa_bar = 2.5").unwrap();
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again.dimensions, cfg.dimensions);
        assert_eq!(again.epsilons, cfg.epsilons);
        assert_eq!(again.kappa_bar(), 2.5);
        assert_eq!(again.beta_magnitude(), cfg.beta_magnitude());
    }

    #[test]
    fn defaults_follow_arms_and_sparsity() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.kappa_bar(), 3f64.ln().max(1.0));
        assert_eq!(cfg.kappa_under(), 1.0 / 3.0);
        assert_eq!(cfg.sparsity(), 10);
        assert!((cfg.beta_magnitude() - 10f64.sqrt().recip()).abs() < 1e-15);
    }
}
