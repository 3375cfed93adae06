//! Plain-text (TOML) strategy blocks and run configuration.
//!
//! ```toml
//! strategy = "acorn"
//! ef = 40
//! tm_enabled = false
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filtered::{AcornParams, IterativeParams, NavixParams, SweepingParams};
use crate::scann::ScannSearchParams;
use crate::storage::CostWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Sweeping,
    Iterative,
    Acorn,
    Navix,
    Scann,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Sweeping,
        StrategyKind::Iterative,
        StrategyKind::Acorn,
        StrategyKind::Navix,
        StrategyKind::Scann,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Sweeping => "sweeping",
            StrategyKind::Iterative => "iterative",
            StrategyKind::Acorn => "acorn",
            StrategyKind::Navix => "navix",
            StrategyKind::Scann => "scann",
        }
    }

    pub fn is_graph(self) -> bool {
        self != StrategyKind::Scann
    }

    /// The knob tuning walks: `ef` for graphs, `leaves_to_scan` for ScaNN.
    pub fn effort_knob(self) -> &'static str {
        if self.is_graph() {
            "ef"
        } else {
            "leaves_to_scan"
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown strategy {s:?}")))
    }
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

fn theta_low() -> f64 {
    0.05
}

fn theta_high() -> f64 {
    0.5
}

fn window() -> usize {
    256
}

/// One strategy and its knobs. Unset effort knobs are filled by tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub strategy: StrategyKind,
    /// Name in results; defaults to the strategy name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub ef: Option<usize>,
    #[serde(default)]
    pub max_scan_tuples: Option<usize>,
    #[serde(default = "yes")]
    pub tm_enabled: bool,
    #[serde(default = "yes")]
    pub adaptive_skip: bool,
    #[serde(default = "theta_low")]
    pub theta_low: f64,
    #[serde(default = "theta_high")]
    pub theta_high: f64,
    #[serde(default = "window")]
    pub window: usize,
    #[serde(default)]
    pub leaves_to_scan: Option<usize>,
    #[serde(default = "one")]
    pub reorder_factor: usize,
    /// Effort values tried during tuning, ascending.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
}

impl StrategyConfig {
    pub fn new(strategy: StrategyKind) -> Self {
        Self {
            strategy,
            label: None,
            ef: None,
            max_scan_tuples: None,
            tm_enabled: true,
            adaptive_skip: true,
            theta_low: theta_low(),
            theta_high: theta_high(),
            window: window(),
            leaves_to_scan: None,
            reorder_factor: 1,
            grid: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::param(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("strategy config serializes")
    }

    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.strategy.name().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ef", self.ef),
            ("max_scan_tuples", self.max_scan_tuples),
            ("leaves_to_scan", self.leaves_to_scan),
            ("reorder_factor", Some(self.reorder_factor)),
            ("window", Some(self.window)),
        ];
        for (name, v) in positive {
            if v == Some(0) {
                return Err(Error::param(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.theta_low) || !(0.0..=1.0).contains(&self.theta_high) {
            return Err(Error::param("thresholds must lie in [0, 1]"));
        }
        if self.theta_low > self.theta_high {
            return Err(Error::param("theta_low must not exceed theta_high"));
        }
        if let Some(g) = &self.grid {
            if g.is_empty() || g.contains(&0) || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("grid must be non-empty, positive and strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn effort(&self) -> Option<usize> {
        if self.strategy.is_graph() {
            self.ef
        } else {
            self.leaves_to_scan
        }
    }

    pub fn with_effort(&self, effort: usize) -> Self {
        let mut c = self.clone();
        if c.strategy.is_graph() {
            c.ef = Some(effort);
        } else {
            c.leaves_to_scan = Some(effort);
        }
        c
    }

    /// Compact knob summary for result rows.
    pub fn knobs(&self, effort: usize) -> String {
        let onoff = |b: bool| if b { "on" } else { "off" };
        match self.strategy {
            StrategyKind::Sweeping => format!("ef={effort}"),
            StrategyKind::Iterative => format!(
                "ef={effort};max_scan_tuples={}",
                self.iterative(10, effort).max_scan_tuples
            ),
            StrategyKind::Acorn => format!(
                "ef={effort};tm={};skip={}",
                onoff(self.tm_enabled),
                onoff(self.adaptive_skip)
            ),
            StrategyKind::Navix => format!(
                "ef={effort};tm={};theta_low={};theta_high={};window={}",
                onoff(self.tm_enabled),
                self.theta_low,
                self.theta_high,
                self.window
            ),
            StrategyKind::Scann => format!("leaves_to_scan={effort};reorder_factor={}", self.reorder_factor),
        }
    }

    pub fn sweeping(&self, k: usize, ef: usize) -> SweepingParams {
        SweepingParams::new(k, ef)
    }

    pub fn iterative(&self, k: usize, ef: usize) -> IterativeParams {
        let mut p = IterativeParams::new(k, ef);
        if let Some(m) = self.max_scan_tuples {
            p.max_scan_tuples = m;
        }
        p
    }

    pub fn acorn(&self, k: usize, ef: usize) -> AcornParams {
        AcornParams {
            adaptive_skip: self.adaptive_skip,
            ..AcornParams::new(k, ef)
        }
    }

    pub fn navix(&self, k: usize, ef: usize) -> NavixParams {
        NavixParams {
            theta_low: self.theta_low,
            theta_high: self.theta_high,
            window: self.window,
            ..NavixParams::new(k, ef)
        }
    }

    pub fn scann(&self, k: usize, leaves: usize) -> ScannSearchParams {
        ScannSearchParams {
            k,
            leaves_to_scan: leaves,
            reorder_factor: self.reorder_factor,
        }
    }
}

fn default_ks() -> Vec<usize> {
    vec![10]
}

fn default_target() -> f64 {
    0.95
}

fn default_workers() -> usize {
    16
}

fn default_repetitions() -> usize {
    5
}

fn default_holdout() -> f64 {
    0.2
}

/// Everything `run` and `tune` need besides the artifacts themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: String,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_target")]
    pub target_recall: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of each cell's queries used for tuning.
    #[serde(default = "default_holdout")]
    pub holdout: f64,
    /// Defaults to the dimension-scaled proxies.
    #[serde(default)]
    pub weights: Option<CostWeights>,
    #[serde(rename = "strategy")]
    pub strategies: Vec<StrategyConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::param(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::param("at least one [[strategy]] block is required"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::param("ks must be non-empty and positive"));
        }
        if self.workers == 0 || self.repetitions == 0 {
            return Err(Error::param("workers and repetitions must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.target_recall) {
            return Err(Error::param("target_recall must lie in [0, 1]"));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::param("holdout must lie strictly between 0 and 1"));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        Ok(())
    }
}

/// Derives an independent seed for a named consumer of one user seed.
pub fn substream(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
