//! Calibrate-then-evaluate sweeps over strategies and horizons, with the
//! analytic bounds attached to every record.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::{default_delta, BoundCalculator, BoundReport};
use crate::channels::SystemModel;
use crate::divergence::MaxMinSolution;
use crate::exec::{derive_seed, Backend};
use crate::sim::MonteCarlo;
use crate::strategies::{InferenceRule, StrategyKind};
use crate::{Error, Result};

/// Allowed constraint level as a function of the horizon. Both forms keep
/// `-log(eps_N)/N -> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    Constant(f64),
    /// `eps_N = scale / N`.
    Inverse {
        scale: f64,
    },
}

impl EpsilonSchedule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            EpsilonSchedule::Constant(e) => e,
            EpsilonSchedule::Inverse { scale } => scale / n as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonSchedule::Constant(e) if e > 0.0 && e < 1.0 => Ok(()),
            EpsilonSchedule::Constant(e) => Err(Error::config(
                "epsilon",
                format!("must lie in (0, 1), got {e}"),
            )),
            EpsilonSchedule::Inverse { scale } if scale > 0.0 && scale.is_finite() => Ok(()),
            EpsilonSchedule::Inverse { scale } => Err(Error::config(
                "epsilon",
                format!("scale of c/n schedule must be positive, got {scale}"),
            )),
        }
    }
}

impl fmt::Display for EpsilonSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSchedule::Constant(e) => write!(f, "{e}"),
            EpsilonSchedule::Inverse { scale } => write!(f, "{scale}/n"),
        }
    }
}

impl FromStr for EpsilonSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: String| Error::config("epsilon", msg);
        let schedule =
            if let Some(scale) = s.strip_suffix("/n") {
                let scale = scale.parse::<f64>().map_err(|_| {
                    bad(format!("cannot parse {s:?}, expected <value> or <scale>/n"))
                })?;
                EpsilonSchedule::Inverse { scale }
            } else {
                EpsilonSchedule::Constant(s.parse::<f64>().map_err(|_| {
                    bad(format!("cannot parse {s:?}, expected <value> or <scale>/n"))
                })?)
            };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl Serialize for EpsilonSchedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpsilonSchedule::Constant(e) => s.serialize_f64(*e),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(e) => {
                let s = EpsilonSchedule::Constant(e);
                s.validate().map_err(serde::de::Error::custom)?;
                Ok(s)
            }
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub strategies: Vec<StrategyKind>,
    pub n_values: Vec<usize>,
    pub epsilon: EpsilonSchedule,
    pub eta: f64,
    /// Achievability slack; `None` uses `1/(2(M-1))`.
    pub delta: Option<f64>,
    pub trials: u64,
    pub seed: u64,
    pub backend: Backend,
}

/// One `(strategy, N)` point: calibrated threshold, out-of-sample estimates
/// and analytic bounds. Failed points carry `error` and empty estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub strategy: String,
    pub n: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub theta: Option<f64>,
    pub psi_hat: Option<f64>,
    pub psi_ci: Option<f64>,
    pub phi_hat: Option<f64>,
    pub phi_ci: Option<f64>,
    /// `-log(phi_hat)`, or `-log(3/trials)` when no incorrect verification
    /// was observed.
    pub neg_log_phi: Option<f64>,
    pub censored: bool,
    /// Importance-sampled counterparts from the safe-hypothesis trials;
    /// these stay informative when `phi` is far below `1/trials`.
    pub phi_is: Option<f64>,
    pub phi_is_ci: Option<f64>,
    pub neg_log_phi_is: Option<f64>,
    pub neg_log_phi_is_ci: Option<f64>,
    pub weak_rate: Option<f64>,
    pub strong_converse: Option<f64>,
    pub achievability_theta: Option<f64>,
    pub be_upper_main: Option<f64>,
    pub be_lower_main: Option<f64>,
    pub log_term: Option<f64>,
    pub v: Option<f64>,
    pub t: Option<f64>,
    pub error: Option<String>,
}

impl SweepRecord {
    fn empty(strategy: StrategyKind, n: usize, epsilon: f64, eta: f64) -> Self {
        Self {
            strategy: strategy.name().to_string(),
            n,
            epsilon,
            eta,
            theta: None,
            psi_hat: None,
            psi_ci: None,
            phi_hat: None,
            phi_ci: None,
            neg_log_phi: None,
            censored: false,
            phi_is: None,
            phi_is_ci: None,
            neg_log_phi_is: None,
            neg_log_phi_is_ci: None,
            weak_rate: None,
            strong_converse: None,
            achievability_theta: None,
            be_upper_main: None,
            be_lower_main: None,
            log_term: None,
            v: None,
            t: None,
            error: None,
        }
    }

    fn attach_bounds(&mut self, b: &BoundReport) {
        self.weak_rate = Some(b.weak_converse_rate);
        self.strong_converse = b.strong_converse;
        self.achievability_theta = b.achievability;
        self.be_upper_main = b.be_upper;
        self.be_lower_main = b.be_lower;
        self.log_term = Some(b.log_term);
        self.v = b.v;
        self.t = b.t;
    }
}

fn strategy_label(kind: StrategyKind) -> u64 {
    match kind {
        StrategyKind::Ors => 1,
        StrategyKind::Das => 2,
        StrategyKind::RoundRobin => 3,
    }
}

/// Sub-seed for one sweep point; independent of the order of the lists.
pub fn point_seed(seed: u64, kind: StrategyKind, n: usize) -> u64 {
    derive_seed(seed, &[strategy_label(kind), n as u64])
}

/// Records sorted by strategy name, then horizon.
pub fn sweep(
    model: &SystemModel,
    solution: &MaxMinSolution,
    config: &SweepConfig,
) -> Result<Vec<SweepRecord>> {
    if config.trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let mut strategies = config.strategies.clone();
    strategies.sort_by_key(|k| k.name());
    strategies.dedup();
    let mut ns = config.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    if strategies.is_empty() || ns.is_empty() {
        return Ok(Vec::new());
    }
    let delta = config
        .delta
        .unwrap_or_else(|| default_delta(model.num_components()));

    let calc = BoundCalculator::new(model, solution)?;
    let bounds = bound_reports(&calc, &ns, config, delta);

    let mut records = Vec::with_capacity(strategies.len() * ns.len());
    for kind in strategies {
        let strategy = kind.build(solution)?;
        for (&n, bound) in ns.iter().zip(&bounds) {
            let epsilon = config.epsilon.at(n);
            let mut record = SweepRecord::empty(kind, n, epsilon, config.eta);
            match bound {
                Ok(b) => record.attach_bounds(b),
                Err(e) => record.error = Some(e.clone()),
            }
            if record.error.is_none() {
                let seed = point_seed(config.seed, kind, n);
                let mc = MonteCarlo {
                    trials: config.trials,
                    seed,
                    backend: config.backend,
                };
                let outcome = mc
                    .calibrate_threshold(model, solution, &strategy, n, epsilon)
                    .and_then(|theta| {
                        let rule = InferenceRule::Threshold(theta);
                        mc.estimate(model, solution, &strategy, &rule, n)
                            .map(|r| (theta, r))
                    });
                match outcome {
                    Ok((theta, r)) => {
                        record.theta = Some(theta);
                        record.psi_hat = Some(r.psi_hat);
                        record.psi_ci = Some(r.psi_ci);
                        record.phi_hat = Some(r.phi_hat);
                        record.phi_ci = Some(r.phi_ci);
                        record.phi_is = Some(r.phi_is);
                        record.phi_is_ci = Some(r.phi_is_ci);
                        record.neg_log_phi_is = Some(r.neg_log_phi_is);
                        record.neg_log_phi_is_ci = Some(r.neg_log_phi_is_ci);
                        if r.phi_hat > 0.0 {
                            record.neg_log_phi = Some(-r.phi_hat.ln());
                        } else {
                            record.neg_log_phi = Some(-(3.0 / config.trials as f64).ln());
                            record.censored = true;
                        }
                    }
                    Err(e) => record.error = Some(e.to_string()),
                }
            }
            records.push(record);
        }
    }
    Ok(records)
}

fn bound_reports(
    calc: &BoundCalculator<'_>,
    ns: &[usize],
    config: &SweepConfig,
    delta: f64,
) -> Vec<std::result::Result<BoundReport, String>> {
    let valid = |n: usize| -> std::result::Result<f64, String> {
        let e = config.epsilon.at(n);
        if n == 0 {
            Err("horizon must be at least 1".into())
        } else if e > 0.0 && e < 1.0 {
            Ok(e)
        } else {
            Err(format!(
                "epsilon schedule gives {e} at n = {n}, outside (0, 1)"
            ))
        }
    };
    let good: Vec<usize> = ns.iter().copied().filter(|n| valid(*n).is_ok()).collect();
    let mut computed = match calc.reports(&good, |n| config.epsilon.at(n), config.eta, delta) {
        Ok(r) => r.into_iter().map(Ok).collect::<Vec<_>>(),
        Err(e) => good.iter().map(|_| Err(e.to_string())).collect(),
    }
    .into_iter();
    ns.iter()
        .map(|&n| match valid(n) {
            Ok(_) => computed.next().expect("one report per valid horizon"),
            Err(e) => Err(e),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ComponentChannel, DiscreteDistribution};
    use crate::divergence::max_min_divergence;

    fn reference() -> (SystemModel, MaxMinSolution) {
        let ch = ComponentChannel::new(
            DiscreteDistribution::new(vec![0.8, 0.2]).unwrap(),
            DiscreteDistribution::new(vec![0.2, 0.8]).unwrap(),
        )
        .unwrap();
        let m = SystemModel::homogeneous(ch, 2, SystemModel::uniform_prior(2, 0.5)).unwrap();
        let s = max_min_divergence(&m).unwrap();
        (m, s)
    }

    fn config(strategies: Vec<StrategyKind>, ns: Vec<usize>) -> SweepConfig {
        SweepConfig {
            strategies,
            n_values: ns,
            epsilon: EpsilonSchedule::Constant(0.1),
            eta: 10.0,
            delta: None,
            trials: 2000,
            seed: 4,
            backend: Backend::default(),
        }
    }

    #[test]
    fn empty_strategy_list() {
        let (m, s) = reference();
        assert!(sweep(&m, &s, &config(vec![], vec![10])).unwrap().is_empty());
    }

    #[test]
    fn records_sorted_and_complete() {
        let (m, s) = reference();
        let recs = sweep(
            &m,
            &s,
            &config(vec![StrategyKind::Ors, StrategyKind::Das], vec![20, 10]),
        )
        .unwrap();
        let keys: Vec<(String, usize)> = recs.iter().map(|r| (r.strategy.clone(), r.n)).collect();
        assert_eq!(
            keys,
            vec![
                ("das".into(), 10),
                ("das".into(), 20),
                ("ors".into(), 10),
                ("ors".into(), 20)
            ]
        );
        assert!(recs
            .iter()
            .all(|r| r.error.is_none() && r.strong_converse.is_some()));
    }

    #[test]
    fn order_of_lists_does_not_matter() {
        let (m, s) = reference();
        let a = sweep(
            &m,
            &s,
            &config(vec![StrategyKind::Ors, StrategyKind::Das], vec![5, 9]),
        )
        .unwrap();
        let b = sweep(
            &m,
            &s,
            &config(vec![StrategyKind::Das, StrategyKind::Ors], vec![9, 5]),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_schedule_points_become_error_records() {
        let (m, s) = reference();
        let mut c = config(vec![StrategyKind::Das], vec![1, 4]);
        c.epsilon = EpsilonSchedule::Inverse { scale: 2.0 };
        let recs = sweep(&m, &s, &c).unwrap();
        assert!(recs[0].error.is_some() && recs[0].psi_hat.is_none());
        assert!(recs[1].error.is_none());
        assert_eq!(recs[1].epsilon, 0.5);
    }

    #[test]
    fn censored_points_use_rule_of_three() {
        let (m, s) = reference();
        let mut c = config(vec![StrategyKind::Das], vec![60]);
        c.trials = 200;
        let r = &sweep(&m, &s, &c).unwrap()[0];
        if r.phi_hat == Some(0.0) {
            assert!(r.censored);
            assert_eq!(r.neg_log_phi, Some(-(3.0f64 / 200.0).ln()));
        } else {
            assert!(!r.censored);
        }
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(
            "0.1".parse::<EpsilonSchedule>().unwrap(),
            EpsilonSchedule::Constant(0.1)
        );
        assert_eq!(
            "1/n".parse::<EpsilonSchedule>().unwrap(),
            EpsilonSchedule::Inverse { scale: 1.0 }
        );
        assert!("0".parse::<EpsilonSchedule>().is_err());
        assert!("1".parse::<EpsilonSchedule>().is_err());
        assert!("-2/n".parse::<EpsilonSchedule>().is_err());
        assert!("abc".parse::<EpsilonSchedule>().is_err());
    }
}
