//! Component-selection and inference rules.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::TrajectoryState;
use crate::channels::{cross_entropy, SystemModel};
use crate::divergence::MaxMinSolution;
use crate::{Error, Result};

/// Named selection rules as they appear in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Open-loop randomized: each step draws a component from `alpha*`.
    Ors,
    /// Deterministic adaptive: probe the component with the smallest
    /// `z[j] - log rho(j)`.
    Das,
    /// Cycles through the components in index order. Baseline only.
    RoundRobin,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ors => "ors",
            StrategyKind::Das => "das",
            StrategyKind::RoundRobin => "round_robin",
        }
    }

    pub fn build(self, solution: &MaxMinSolution) -> Result<SelectionStrategy> {
        Ok(match self {
            StrategyKind::Ors => SelectionStrategy::ors(solution.alpha_star.clone())?,
            StrategyKind::Das => SelectionStrategy::Das,
            StrategyKind::RoundRobin => SelectionStrategy::RoundRobin,
        })
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
        match s.trim() {
            "ors" => Ok(StrategyKind::Ors),
            "das" => Ok(StrategyKind::Das),
            "round_robin" => Ok(StrategyKind::RoundRobin),
            other => Err(Error::config(
                "strategy",
                format!("unknown strategy {other:?}, expected ors, das or round_robin"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectionStrategy {
    Ors {
        weights: Vec<f64>,
        cumulative: Vec<f64>,
    },
    Das,
    RoundRobin,
}

impl SelectionStrategy {
    pub fn ors(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution(
                "ORS weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "ORS weights sum to {total}, expected 1"
            )));
        }
        let cumulative = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(SelectionStrategy::Ors {
            weights,
            cumulative,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            SelectionStrategy::Ors { .. } => StrategyKind::Ors,
            SelectionStrategy::Das => StrategyKind::Das,
            SelectionStrategy::RoundRobin => StrategyKind::RoundRobin,
        }
    }

    /// Component to probe next. Only ORS consumes randomness.
    pub fn select<R: Rng + ?Sized>(
        &self,
        state: &TrajectoryState,
        model: &SystemModel,
        rng: &mut R,
    ) -> usize {
        match self {
            SelectionStrategy::Ors { cumulative, .. } => {
                let u: f64 = rng.gen();
                cumulative
                    .iter()
                    .position(|c| u < *c)
                    .unwrap_or(cumulative.len() - 1)
            }
            SelectionStrategy::Das => das_select(state, model),
            SelectionStrategy::RoundRobin => state.n % model.num_components(),
        }
    }
}

/// `argmin_j z[j] - log rho(j)`, lowest index on ties.
pub fn das_select(state: &TrajectoryState, model: &SystemModel) -> usize {
    argmin(
        state
            .z
            .iter()
            .zip(model.log_anomaly_prior())
            .map(|(z, lp)| z - lp),
    )
}

pub(crate) fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::INFINITY;
    for (j, v) in values.into_iter().enumerate() {
        if v < best_value {
            best = j;
            best_value = v;
        }
    }
    best
}

/// Centered scores `z[j] - log rho(j) - z_bar - H(beta*, rho)`; their
/// `beta*`-weighted sum is zero and their argmin is the DAS choice.
pub fn zeta(state: &TrajectoryState, model: &SystemModel, solution: &MaxMinSolution) -> Vec<f64> {
    let h = cross_entropy(&solution.beta_star, model.anomaly_prior())
        .expect("anomaly prior is strictly positive");
    state
        .z
        .iter()
        .zip(model.log_anomaly_prior())
        .map(|(z, lp)| z - lp - state.z_bar - h)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceRule {
    /// Declare safe iff the confidence is at least `theta`. `+inf` declares
    /// unsafe always.
    Threshold(f64),
    AlwaysSafe,
}

impl InferenceRule {
    pub fn threshold(theta: f64) -> Result<Self> {
        if theta.is_nan() || theta == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("invalid threshold {theta}")));
        }
        Ok(InferenceRule::Threshold(theta))
    }

    #[inline]
    pub fn infer(&self, confidence: f64) -> Verdict {
        match self {
            InferenceRule::Threshold(theta) if confidence >= *theta => Verdict::Safe,
            InferenceRule::Threshold(_) => Verdict::Unsafe,
            InferenceRule::AlwaysSafe => Verdict::Safe,
        }
    }
}
