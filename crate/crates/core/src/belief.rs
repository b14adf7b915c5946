//! Sufficient statistics of a probing trajectory.
//!
//! `z[j]` accumulates the log-likelihood ratio of the safe hypothesis against
//! "component `j` is anomalous"; `z_bar` is its `beta*`-weighted average.
//! Everything the inference and selection rules need is a function of these.

use crate::channels::{kl_weights, SystemModel};
use crate::divergence::MaxMinSolution;
use crate::{Error, Result};

/// `log(sum_i exp(x_i))`, shifted by the maximum.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub n: usize,
    pub z: Vec<f64>,
    pub z_bar: f64,
}

impl TrajectoryState {
    pub fn new(num_components: usize) -> Self {
        Self {
            n: 0,
            z: vec![0.0; num_components],
            z_bar: 0.0,
        }
    }

    /// State after additionally observing `y` from component `u`.
    pub fn update(
        &self,
        model: &SystemModel,
        solution: &MaxMinSolution,
        u: usize,
        y: usize,
    ) -> Result<Self> {
        let channel = model.channel(u)?;
        model.check_symbol(channel, y)?;
        if self.z.len() != model.num_components() {
            return Err(Error::Shape(format!(
                "state tracks {} components, model has {}",
                self.z.len(),
                model.num_components()
            )));
        }
        let mut next = self.clone();
        next.record(model, solution, u, y);
        Ok(next)
    }

    /// In-place update without bounds checking beyond slice indexing.
    #[inline]
    pub(crate) fn record(
        &mut self,
        model: &SystemModel,
        solution: &MaxMinSolution,
        u: usize,
        y: usize,
    ) {
        let llr = model.channels()[u].llr(y);
        self.z[u] += llr;
        self.z_bar += solution.beta_star[u] * llr;
        self.n += 1;
    }

    /// Per-step increment of `z_bar` for an observation `y` of component `u`.
    pub fn increment(model: &SystemModel, solution: &MaxMinSolution, u: usize, y: usize) -> f64 {
        solution.beta_star[u] * model.channels()[u].llr(y)
    }

    /// Confidence level: log-likelihood ratio of the safe hypothesis against
    /// the prior mixture of anomalous hypotheses, `-log sum_j rho(j) e^{-z_j}`.
    pub fn confidence(&self, model: &SystemModel) -> f64 {
        let log_prior = model.log_anomaly_prior();
        -log_sum_exp(self.z.iter().zip(log_prior).map(|(z, lp)| lp - z))
    }

    /// Posterior over the anomalous component given that the system is unsafe.
    pub fn posterior(&self, model: &SystemModel) -> Posterior {
        let log_prior = model.log_anomaly_prior();
        let logits: Vec<f64> = self.z.iter().zip(log_prior).map(|(z, lp)| lp - z).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        Posterior {
            probs: weights.into_iter().map(|w| w / total).collect(),
        }
    }

    /// Splits the confidence into `-D(beta* || posterior)` and
    /// `z_bar + D(beta* || prior)`; the two parts sum to [`Self::confidence`].
    pub fn decompose(&self, model: &SystemModel, solution: &MaxMinSolution) -> (f64, f64) {
        let posterior = self.posterior(model);
        let kl_term = -kl_weights(&solution.beta_star, &posterior.probs);
        let sum_term = self.z_bar + kl_weights(&solution.beta_star, model.anomaly_prior());
        (kl_term, sum_term)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probs: Vec<f64>,
}

/// A trajectory state that also keeps the `(component, symbol)` history.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedTrajectory {
    pub state: TrajectoryState,
    pub history: Vec<(usize, usize)>,
}

impl RecordedTrajectory {
    pub fn new(num_components: usize) -> Self {
        Self {
            state: TrajectoryState::new(num_components),
            history: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        model: &SystemModel,
        solution: &MaxMinSolution,
        u: usize,
        y: usize,
    ) -> Result<()> {
        self.state = self.state.update(model, solution, u, y)?;
        self.history.push((u, y));
        Ok(())
    }
}
