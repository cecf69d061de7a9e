//! TOML experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::concentration::EventParams;
use crate::ensemble::{EnsembleSpec, EntryKind, EntryLaw, Symmetry, MAX_DIMENSION};
use crate::spectral::EtaRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Identities,
    Moments,
    Concentration,
    SelfConsistent,
    Domination,
    Bootstrap,
    LocalLaw,
    Report,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Identities,
        ExperimentKind::Moments,
        ExperimentKind::Concentration,
        ExperimentKind::SelfConsistent,
        ExperimentKind::Domination,
        ExperimentKind::Bootstrap,
        ExperimentKind::LocalLaw,
        ExperimentKind::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Identities => "identities",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::SelfConsistent => "self-consistent",
            ExperimentKind::Domination => "domination",
            ExperimentKind::Bootstrap => "bootstrap",
            ExperimentKind::LocalLaw => "local-law",
            ExperimentKind::Report => "report",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_entry_kind")]
    pub law: EntryKind,
    #[serde(default = "default_symmetry")]
    pub symmetry: Symmetry,
    /// Defaults to 1 (hermitian) or 2 (real symmetric).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal_variance: Option<f64>,
}

fn default_entry_kind() -> EntryKind {
    EntryKind::ComplexGaussian
}

fn default_symmetry() -> Symmetry {
    Symmetry::Hermitian
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            law: default_entry_kind(),
            symmetry: default_symmetry(),
            diagonal_variance: None,
        }
    }
}

impl EnsembleConfig {
    pub fn spec(&self, n: usize, master_seed: u64) -> EnsembleSpec {
        let mut law = EntryLaw::default_for(self.law, self.symmetry);
        if let Some(v) = self.diagonal_variance {
            law.diagonal_variance = v;
        }
        EnsembleSpec {
            n,
            law,
            symmetry: self.symmetry,
            master_seed,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(n) => vec![n],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    /// Matrix sizes; a single integer is accepted.
    #[serde(alias = "n", alias = "N", deserialize_with = "one_or_many")]
    pub n_ladder: Vec<usize>,
    #[serde(default = "default_energies")]
    pub energies: Vec<f64>,
    /// `eta` as a function of `N`; defaults to the domain floor `N^(-1 + gamma)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<EtaRule>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Epsilon for the events; defaults to half the admissible maximum per `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_epsilon: Option<f64>,
    /// `eta` at which the event-conditioned and Efron–Stein checks run.
    #[serde(default = "default_check_eta")]
    pub check_eta: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_cap")]
    pub cap: f64,
    /// Random index pairs added to the fixed panel.
    #[serde(default = "default_panel_extra")]
    pub panel_extra: usize,
    /// Sizes for the spectral-distribution check of the `moments` experiment.
    #[serde(default = "default_ks_ladder")]
    pub ks_ladder: Vec<usize>,
    #[serde(default = "default_ks_trials")]
    pub ks_trials: usize,
    /// Sizes for the event-conditioned and Efron–Stein checks.
    #[serde(default = "default_event_ladder")]
    pub event_ladder: Vec<usize>,
    /// Criterion ids the `report` experiment evaluates; all when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub criteria: Vec<String>,
}

fn default_energies() -> Vec<f64> {
    vec![0.0]
}
fn default_gamma() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    0.1
}
fn default_epsilon() -> f64 {
    0.2
}
fn default_check_eta() -> f64 {
    1.0
}
fn default_trials() -> usize {
    100
}
fn default_resamples() -> usize {
    200
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_cap() -> f64 {
    crate::bootstrap::DEFAULT_CAP
}
fn default_panel_extra() -> usize {
    4
}
fn default_ks_ladder() -> Vec<usize> {
    vec![128, 512, 2048]
}
fn default_ks_trials() -> usize {
    20
}
fn default_event_ladder() -> Vec<usize> {
    vec![64, 128]
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse(msg) => write!(f, "config does not match the schema: {msg}"),
            ConfigError::Invalid(v) => {
                write!(f, "{} invalid parameter(s):", v.len())?;
                for msg in v {
                    write!(f, "\n  - {msg}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn minimal(kind: ExperimentKind, n_ladder: Vec<usize>, seed: u64) -> Self {
        Self {
            kind,
            ensemble: EnsembleConfig::default(),
            n_ladder,
            energies: default_energies(),
            eta: None,
            gamma: default_gamma(),
            delta: default_delta(),
            epsilon: default_epsilon(),
            event_epsilon: None,
            check_eta: default_check_eta(),
            trials: default_trials(),
            resamples: default_resamples(),
            threads: None,
            seed,
            output: default_output(),
            cap: default_cap(),
            panel_extra: default_panel_extra(),
            ks_ladder: default_ks_ladder(),
            ks_trials: default_ks_trials(),
            event_ladder: default_event_ladder(),
            criteria: Vec::new(),
        }
    }

    pub fn eta_rule(&self) -> EtaRule {
        self.eta.unwrap_or(EtaRule::Power(-1.0 + self.gamma))
    }

    pub fn spec(&self, n: usize) -> EnsembleSpec {
        self.ensemble.spec(n, self.seed)
    }

    /// Epsilon for the events at `n`.
    pub fn event_epsilon_at(&self, n: usize) -> f64 {
        self.event_epsilon
            .unwrap_or_else(|| 0.5 * EventParams::epsilon_zero(n, self.delta))
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_ladder.is_empty() {
            v.push("n-ladder is empty".to_string());
        }
        for &n in &self.n_ladder {
            if !(2..=MAX_DIMENSION).contains(&n) {
                v.push(format!("N = {n} outside [2, {MAX_DIMENSION}]"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            v.push(format!("gamma = {} outside (0, 1]", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta < self.gamma / 3.0) {
            v.push(format!(
                "delta = {} violates 0 < delta < gamma/3 = {:.6}",
                self.delta,
                self.gamma / 3.0
            ));
        }
        if !(self.epsilon > 0.0) {
            v.push(format!("epsilon = {} must be positive", self.epsilon));
        }
        if self.kind == ExperimentKind::Concentration {
            for &n in &self.n_ladder {
                let eps0 = EventParams::epsilon_zero(n, self.delta);
                if !(eps0 > 0.0) {
                    v.push(format!("N = {n}: the event interval (0, eps_0) is empty for delta = {}", self.delta));
                } else if let Some(e) = self.event_epsilon {
                    if !(e > 0.0 && e < eps0) {
                        v.push(format!("event-epsilon = {e} outside (0, {eps0:.6}) at N = {n}"));
                    }
                }
            }
        }
        if !(self.check_eta > 0.0) {
            v.push(format!("check-eta = {} must be positive", self.check_eta));
        }
        if self.energies.is_empty() {
            v.push("energies is empty".to_string());
        }
        for &e in &self.energies {
            if !e.is_finite() || self.n_ladder.iter().any(|&n| e.abs() > n as f64) {
                v.push(format!("energy {e} outside [-N, N]"));
            }
        }
        match self.eta {
            Some(EtaRule::Fixed(eta)) if !(eta > 0.0 && eta.is_finite()) => {
                v.push(format!("fixed eta = {eta} must be positive"));
            }
            Some(EtaRule::Power(p)) if !p.is_finite() => v.push(format!("eta exponent {p} is not finite")),
            _ => {}
        }
        if self.trials == 0 {
            v.push("trials must be at least 1".to_string());
        }
        if self.kind == ExperimentKind::Concentration && self.trials < crate::concentration::MIN_TAIL_TRIALS {
            v.push(format!(
                "concentration needs trials >= {}, got {}",
                crate::concentration::MIN_TAIL_TRIALS,
                self.trials
            ));
        }
        if self.resamples < crate::concentration::MIN_RESAMPLES {
            v.push(format!(
                "resamples = {} below the minimum {}",
                self.resamples,
                crate::concentration::MIN_RESAMPLES
            ));
        }
        if self.threads == Some(0) {
            v.push("threads must be at least 1".to_string());
        }
        if !(self.cap >= 1.0) {
            v.push(format!("cap = {} must be at least 1", self.cap));
        }
        if let Some(d) = self.ensemble.diagonal_variance {
            if !(d > 0.0 && d.is_finite()) {
                v.push(format!("diagonal-variance = {d} must be positive"));
            }
        }
        if self.ensemble.symmetry == Symmetry::RealSymmetric && self.ensemble.law == EntryKind::ComplexGaussian {
            v.push("complex-gaussian entries cannot form a real-symmetric matrix".to_string());
        }
        if self.kind == ExperimentKind::Concentration {
            for &n in &self.event_ladder {
                if !(2..=MAX_DIMENSION).contains(&n) {
                    v.push(format!("event-ladder N = {n} outside [2, {MAX_DIMENSION}]"));
                }
            }
        }
        for c in &self.criteria {
            if !crate::harness::report::CRITERIA.contains(&c.as_str()) {
                v.push(format!("unknown criterion {c:?}"));
            }
        }
        if self.kind == ExperimentKind::Moments {
            for &n in &self.ks_ladder {
                if !(2..=MAX_DIMENSION).contains(&n) {
                    v.push(format!("ks-ladder N = {n} outside [2, {MAX_DIMENSION}]"));
                }
            }
        }
        v
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let v = cfg.violations();
        if v.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml(&text)
}
