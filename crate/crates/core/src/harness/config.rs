use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::adversary::ViewMode;
use crate::error::{Error, Result};

/// Experiments the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    AccuracyVsCollusion,
    SuccessRate,
    MinIterations,
    DropoutMse,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::AccuracyVsCollusion => "accuracy_vs_collusion",
            ExperimentKind::SuccessRate => "success_rate",
            ExperimentKind::MinIterations => "min_iterations",
            ExperimentKind::DropoutMse => "dropout_mse",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Rollback-dropout fraction for the pairwise-mask baseline, relative to the
/// total dropout fraction `γ` or to the party count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma2Rule {
    /// `γ / d`
    Divide(u32),
    /// A single party: `1 / n`.
    OneParty,
    Absolute(f64),
}

impl Gamma2Rule {
    pub fn resolve(self, gamma: f64, n: usize) -> f64 {
        match self {
            Gamma2Rule::Divide(d) => gamma / d as f64,
            Gamma2Rule::OneParty => 1.0 / n as f64,
            Gamma2Rule::Absolute(v) => v,
        }
    }
}

impl fmt::Display for Gamma2Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma2Rule::Divide(d) => write!(f, "gamma/{d}"),
            Gamma2Rule::OneParty => write!(f, "1/n"),
            Gamma2Rule::Absolute(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Gamma2Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1/n" {
            return Ok(Gamma2Rule::OneParty);
        }
        if s == "gamma" {
            return Ok(Gamma2Rule::Divide(1));
        }
        if let Some(d) = s.strip_prefix("gamma/") {
            return d
                .parse()
                .ok()
                .filter(|&d| d > 0)
                .map(Gamma2Rule::Divide)
                .ok_or_else(|| Error::Config(format!("bad divisor in `{s}`")));
        }
        s.parse::<f64>()
            .map(Gamma2Rule::Absolute)
            .map_err(|_| Error::Config(format!("bad rollback fraction `{s}`")))
    }
}

impl Serialize for Gamma2Rule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma2Rule::Absolute(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma2Rule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Gamma2Rule::Absolute(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Parameter grid and run settings for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    #[serde(rename = "T")]
    pub iterations: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma2: Vec<Gamma2Rule>,
    pub alpha: f64,
    pub observe_fraction: f64,
    pub modes: Vec<ViewMode>,
    /// Receivers are never repeated by a party across iterations.
    pub distinct: bool,
    /// Partners per party in the pairwise-mask baseline.
    pub gopa_k: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    experiment: ExperimentKind,
    n: Option<Vec<usize>>,
    k: Option<Vec<usize>>,
    #[serde(rename = "T")]
    iterations: Option<Vec<usize>>,
    epsilon: Option<Vec<f64>>,
    delta: Option<Vec<f64>>,
    rho: Option<Vec<f64>>,
    gamma: Option<Vec<f64>>,
    gamma2: Option<Vec<Gamma2Rule>>,
    alpha: Option<f64>,
    observe_fraction: Option<f64>,
    modes: Option<Vec<ViewMode>>,
    distinct: Option<bool>,
    gopa_k: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for each experiment.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            experiment: kind,
            n: vec![100],
            k: vec![1],
            iterations: vec![10],
            epsilon: vec![0.1],
            delta: vec![1e-5],
            rho: vec![0.0],
            gamma: vec![0.0],
            gamma2: vec![Gamma2Rule::Divide(2), Gamma2Rule::Divide(4), Gamma2Rule::OneParty],
            alpha: 1.3,
            observe_fraction: 0.5,
            modes: vec![ViewMode::Eavesdrop, ViewMode::Collusion],
            distinct: false,
            gopa_k: 20,
            trials: 100,
            seed: 1,
        };
        match kind {
            ExperimentKind::AccuracyVsCollusion => ExperimentConfig {
                n: vec![1024],
                rho: (0..=9).map(|i| i as f64 / 10.0).collect(),
                trials: 1,
                ..base
            },
            ExperimentKind::SuccessRate => ExperimentConfig {
                k: (1..=5).collect(),
                iterations: (1..=10).map(|i| 2 * i).collect(),
                rho: vec![0.3],
                ..base
            },
            ExperimentKind::MinIterations => ExperimentConfig {
                n: vec![100, 500],
                rho: vec![0.5],
                iterations: vec![20],
                modes: vec![ViewMode::Collusion],
                distinct: true,
                trials: 1000,
                ..base
            },
            ExperimentKind::DropoutMse => ExperimentConfig {
                n: vec![200],
                iterations: vec![10, 20],
                epsilon: vec![0.2],
                rho: vec![0.1],
                gamma: vec![0.05, 0.1, 0.2],
                modes: vec![ViewMode::Collusion],
                trials: 1000,
                ..base
            },
        }
    }

    /// Parses a JSON document; absent fields keep the experiment's defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let o: Overrides = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = Self::defaults(o.experiment);
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { c.$f = v; } )* };
        }
        take!(n, k, iterations, epsilon, delta, rho, gamma, gamma2, alpha, observe_fraction, modes, distinct, gopa_k, trials, seed);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("n", self.n.is_empty()),
            ("k", self.k.is_empty()),
            ("T", self.iterations.is_empty()),
            ("epsilon", self.epsilon.is_empty()),
            ("delta", self.delta.is_empty()),
            ("rho", self.rho.is_empty()),
            ("gamma", self.gamma.is_empty()),
            ("modes", self.modes.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|e| e.1) {
            return Err(Error::Config(format!("grid `{name}` is empty")));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n.iter().any(|&n| n < 2) || self.k.contains(&0) || self.iterations.contains(&0) {
            return Err(Error::Config("need n ≥ 2, k ≥ 1 and T ≥ 1".into()));
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !self.epsilon.iter().all(|&e| unit(e)) || !self.delta.iter().all(|&d| unit(d)) {
            return Err(Error::Config("ε and δ must lie in (0, 1)".into()));
        }
        if !self.rho.iter().all(|&r| (0.0..1.0).contains(&r)) || !self.gamma.iter().all(|&g| (0.0..1.0).contains(&g)) {
            return Err(Error::Config("ρ and γ must lie in [0, 1)".into()));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::Config("α must exceed 1".into()));
        }
        if !(0.0..=1.0).contains(&self.observe_fraction) {
            return Err(Error::Config("observe fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
