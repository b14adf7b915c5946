//! Seeded Monte Carlo estimation of verification probabilities.
//!
//! `psi` is estimated from trials under the safe hypothesis and `phi` from
//! trials whose anomalous component is drawn from the conditional prior.
//! Trial `i` always uses the random stream `(seed, kind, i)`, so estimates
//! are identical for every backend and worker count.

mod oracle;
mod sweep;

pub use oracle::{
    brute_force_small, OracleResult, ORACLE_MAX_ALPHABET, ORACLE_MAX_COMPONENTS, ORACLE_MAX_HORIZON,
};
pub use sweep::{point_seed, sweep, EpsilonSchedule, SweepConfig, SweepRecord};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::TrajectoryState;
use crate::channels::{Hypothesis, SystemModel};
use crate::divergence::MaxMinSolution;
use crate::exec::{stream_rng, Backend, Stream};
use crate::strategies::{InferenceRule, SelectionStrategy, Verdict};
use crate::{Error, Result};

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959963984540054;
/// Normal quantile for a one-sided 95% bound.
pub const Z95_ONE_SIDED: f64 = 1.6448536269514722;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub psi_hat: f64,
    pub phi_hat: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub psi_ci: f64,
    pub phi_ci: f64,
    /// Importance-sampled `phi` from the safe-hypothesis trials.
    pub phi_is: f64,
    pub phi_is_ci: f64,
    /// `-log(phi_is)` computed in the log domain, and its 95% half-width by
    /// the delta method.
    pub neg_log_phi_is: f64,
    pub neg_log_phi_is_ci: f64,
    pub trials: u64,
    pub seed: u64,
}

/// `1.96 * sqrt(p (1 - p) / trials)`.
pub fn ci_half_width(p: f64, trials: u64) -> f64 {
    Z95 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Runs `n` select-observe-update steps under hypothesis `x`.
pub fn run_trial<R: Rng + ?Sized>(
    model: &SystemModel,
    solution: &MaxMinSolution,
    strategy: &SelectionStrategy,
    x: Hypothesis,
    n: usize,
    rng: &mut R,
) -> Result<(TrajectoryState, f64)> {
    if let Hypothesis::Anomalous(j) = x {
        model.check_component(j)?;
    }
    let state = simulate(model, solution, strategy, x, n, rng);
    let confidence = state.confidence(model);
    Ok((state, confidence))
}

#[inline]
pub(crate) fn simulate<R: Rng + ?Sized>(
    model: &SystemModel,
    solution: &MaxMinSolution,
    strategy: &SelectionStrategy,
    x: Hypothesis,
    n: usize,
    rng: &mut R,
) -> TrajectoryState {
    let mut state = TrajectoryState::new(model.num_components());
    for _ in 0..n {
        let u = strategy.select(&state, model, rng);
        let y = model.channels()[u].sample(x == Hypothesis::Anomalous(u), rng);
        state.record(model, solution, u, y);
    }
    state
}

/// Draws the anomalous component from the conditional prior.
pub fn sample_anomaly<R: Rng + ?Sized>(model: &SystemModel, rng: &mut R) -> usize {
    let mut u: f64 = rng.gen();
    let prior = model.anomaly_prior();
    for (j, p) in prior[..prior.len() - 1].iter().enumerate() {
        if u < *p {
            return j;
        }
        u -= p;
    }
    prior.len() - 1
}

/// Trial count, master seed and execution backend for a batch of trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub trials: u64,
    pub seed: u64,
    pub backend: Backend,
}

impl MonteCarlo {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            backend: Backend::default(),
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    fn check(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Domain("at least one trial is required".into()));
        }
        Ok(())
    }

    /// Final confidences of `trials` trajectories under the safe hypothesis
    /// (`Stream::Safe`, `Stream::Calibration`) or a prior-drawn anomaly
    /// (`Stream::Unsafe`).
    pub fn confidences(
        &self,
        model: &SystemModel,
        solution: &MaxMinSolution,
        strategy: &SelectionStrategy,
        n: usize,
        stream: Stream,
    ) -> Vec<f64> {
        self.backend.map_indexed(self.trials, |i| {
            let mut rng = stream_rng(self.seed, stream, i);
            let x = match stream {
                Stream::Unsafe => Hypothesis::Anomalous(sample_anomaly(model, &mut rng)),
                _ => Hypothesis::Safe,
            };
            simulate(model, solution, strategy, x, n, &mut rng).confidence(model)
        })
    }

    pub fn estimate(
        &self,
        model: &SystemModel,
        solution: &MaxMinSolution,
        strategy: &SelectionStrategy,
        rule: &InferenceRule,
        n: usize,
    ) -> Result<EstimateReport> {
        self.check()?;
        let accepted = |c: &f64| rule.infer(*c) == Verdict::Safe;
        let safe = self.confidences(model, solution, strategy, n, Stream::Safe);
        let unsafe_ = self.confidences(model, solution, strategy, n, Stream::Unsafe);
        let k = self.trials as f64;
        let psi_hat = safe.iter().filter(|c| accepted(c)).count() as f64 / k;
        let phi_hat = unsafe_.iter().filter(|c| accepted(c)).count() as f64 / k;
        let (neg_log_phi_is, rel_ci) = importance_estimate(
            safe.iter()
                .map(|c| if accepted(c) { -c } else { f64::NEG_INFINITY }),
            k,
        );
        let phi_is = (-neg_log_phi_is).exp();
        Ok(EstimateReport {
            psi_hat,
            phi_hat,
            psi_ci: ci_half_width(psi_hat, self.trials),
            phi_ci: ci_half_width(phi_hat, self.trials),
            phi_is,
            phi_is_ci: phi_is * rel_ci,
            neg_log_phi_is,
            neg_log_phi_is_ci: rel_ci,
            trials: self.trials,
            seed: self.seed,
        })
    }

    /// Largest sampled safe-hypothesis confidence `theta` whose empirical
    /// fraction of samples strictly below it is at most
    /// `eps - 1.645 sqrt(eps (1 - eps) / trials)`.
    pub fn calibrate_threshold(
        &self,
        model: &SystemModel,
        solution: &MaxMinSolution,
        strategy: &SelectionStrategy,
        n: usize,
        epsilon: f64,
    ) -> Result<f64> {
        self.check()?;
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        let mut sample = self.confidences(model, solution, strategy, n, Stream::Calibration);
        Ok(lower_quantile_threshold(&mut sample, epsilon))
    }
}

/// Under the safe hypothesis the likelihood ratio of the prior mixture of
/// anomalous hypotheses is `exp(-confidence)` for every strategy, so
/// `phi = E_0[1{accept} exp(-C)]`. Takes `log w_i` (`-inf` for rejected
/// trials) and returns `(-log mean w, z95 * relative standard error)`.
pub(crate) fn importance_estimate(
    log_weights: impl Iterator<Item = f64> + Clone,
    k: f64,
) -> (f64, f64) {
    let max = log_weights.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (f64::INFINITY, 0.0);
    }
    let (sum, sum_sq) = log_weights.fold((0.0, 0.0), |(a, b), lw| {
        let w = (lw - max).exp();
        (a + w, b + w * w)
    });
    let mean = sum / k;
    let var = (sum_sq / k - mean * mean).max(0.0);
    (-(max + mean.ln()), Z95 * var.sqrt() / (mean * k.sqrt()))
}

pub(crate) fn lower_quantile_threshold(sample: &mut [f64], epsilon: f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let k = sample.len() as f64;
    let adjusted = (epsilon - Z95_ONE_SIDED * (epsilon * (1.0 - epsilon) / k).sqrt()).max(0.0);
    let allowed = ((adjusted * k).floor() as usize).min(sample.len() - 1);
    sample[allowed]
}

pub fn estimate(
    model: &SystemModel,
    solution: &MaxMinSolution,
    strategy: &SelectionStrategy,
    rule: &InferenceRule,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<EstimateReport> {
    MonteCarlo::new(trials, seed).estimate(model, solution, strategy, rule, n)
}

pub fn calibrate_threshold(
    model: &SystemModel,
    solution: &MaxMinSolution,
    strategy: &SelectionStrategy,
    n: usize,
    epsilon: f64,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    MonteCarlo::new(trials, seed).calibrate_threshold(model, solution, strategy, n, epsilon)
}
