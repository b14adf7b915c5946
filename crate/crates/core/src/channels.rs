//! Observation alphabets, per-component channels and the system model.
//!
//! Every component `u` has a pair of strictly positive pmfs over a shared
//! finite alphabet: `p0` when the component is healthy and `p1` when it is the
//! anomaly. Components are indexed from zero throughout the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A strictly positive pmf over observation symbols `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates `probs` as is: every entry finite and positive, total mass
    /// within [`SUM_TOLERANCE`] of one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_positive(&probs)?;
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Rescales positive weights to unit mass.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        check_positive(&probs)?;
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Draws one symbol by inverting the cdf with a single uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u: f64 = rng.gen();
        let last = self.probs.len() - 1;
        for (symbol, &p) in self.probs[..last].iter().enumerate() {
            if u < p {
                return symbol;
            }
            u -= p;
        }
        last
    }
}

fn check_positive(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution(
            "empty probability vector".into(),
        ));
    }
    if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "entries must be finite and strictly positive, found {bad}"
        )));
    }
    Ok(())
}

/// Kullback-Leibler divergence `D(p || q)` in nats.
pub fn kl(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "alphabet sizes differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_weights(p.probs(), q.probs()))
}

/// `sum_i p(i) log(p(i)/q(i))` for equal-length vectors; zero-weight terms
/// of `p` contribute nothing.
pub(crate) fn kl_weights(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// Cross-entropy `H(p, q) = -sum_i p(i) log q(i)` for a weight vector `p`
/// and a strictly positive vector `q`.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "vector lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    if let Some(bad) = q.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!(
            "cross-entropy needs a strictly positive second argument, found {bad}"
        )));
    }
    Ok(-p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi != 0.0)
        .map(|(pi, qi)| pi * qi.ln())
        .sum::<f64>())
}

/// Observation laws of one component together with its log-likelihood
/// ratio table `log(p0(y)/p1(y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentChannel {
    p0: DiscreteDistribution,
    p1: DiscreteDistribution,
    llr: Vec<f64>,
    divergence: f64,
}

impl ComponentChannel {
    pub fn new(p0: DiscreteDistribution, p1: DiscreteDistribution) -> Result<Self> {
        let divergence = kl(&p0, &p1)?;
        if !(divergence > 0.0) {
            return Err(Error::DegenerateModel(
                "p0 and p1 coincide, the component carries no information".into(),
            ));
        }
        let llr = p0
            .probs()
            .iter()
            .zip(p1.probs())
            .map(|(a, b)| (a / b).ln())
            .collect();
        Ok(Self {
            p0,
            p1,
            llr,
            divergence,
        })
    }

    pub fn p0(&self) -> &DiscreteDistribution {
        &self.p0
    }

    pub fn p1(&self) -> &DiscreteDistribution {
        &self.p1
    }

    pub fn alphabet_size(&self) -> usize {
        self.p0.len()
    }

    /// `log(p0(y)/p1(y))`. Panics if `y` is outside the alphabet.
    #[inline]
    pub fn llr(&self, y: usize) -> f64 {
        self.llr[y]
    }

    pub fn llr_table(&self) -> &[f64] {
        &self.llr
    }

    /// `D(p0 || p1)`, strictly positive by construction.
    pub fn divergence(&self) -> f64 {
        self.divergence
    }

    pub fn sample<R: Rng + ?Sized>(&self, anomalous: bool, rng: &mut R) -> usize {
        if anomalous {
            self.p1.sample(rng)
        } else {
            self.p0.sample(rng)
        }
    }
}

/// True state of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    Safe,
    /// The component with this (zero-based) index is the unique anomaly.
    Anomalous(usize),
}

/// `M` components, their channels and a prior over `{safe, 1, ..., M}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    channels: Vec<ComponentChannel>,
    prior: Vec<f64>,
    anomaly_prior: Vec<f64>,
    log_anomaly_prior: Vec<f64>,
}

impl SystemModel {
    /// `prior[0]` is the probability of the safe hypothesis and `prior[j]`
    /// that of component `j - 1` being anomalous.
    pub fn new(channels: Vec<ComponentChannel>, prior: Vec<f64>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Shape("a model needs at least one component".into()));
        }
        if prior.len() != channels.len() + 1 {
            return Err(Error::Shape(format!(
                "prior has {} entries, expected M + 1 = {}",
                prior.len(),
                channels.len() + 1
            )));
        }
        let total: f64 = prior.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "prior sums to {total}, expected 1"
            )));
        }
        if !(prior[0] > 0.0 && prior[0] < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "prior mass on the safe hypothesis must lie in (0, 1), got {}",
                prior[0]
            )));
        }
        if let Some(bad) = prior[1..].iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "prior mass on each anomaly must be positive, found {bad}"
            )));
        }
        let unsafe_mass: f64 = prior[1..].iter().sum();
        let anomaly_prior: Vec<f64> = prior[1..].iter().map(|p| p / unsafe_mass).collect();
        let log_anomaly_prior = anomaly_prior.iter().map(|p| p.ln()).collect();
        Ok(Self {
            channels,
            prior,
            anomaly_prior,
            log_anomaly_prior,
        })
    }

    /// `M` copies of one channel with the given prior.
    pub fn homogeneous(channel: ComponentChannel, m: usize, prior: Vec<f64>) -> Result<Self> {
        Self::new(vec![channel; m], prior)
    }

    /// Prior with mass `safe` on hypothesis 0 and the rest split evenly.
    pub fn uniform_prior(m: usize, safe: f64) -> Vec<f64> {
        std::iter::once(safe)
            .chain(std::iter::repeat_n((1.0 - safe) / m as f64, m))
            .collect()
    }

    pub fn from_config(config: &ModelConfig) -> Result<Self> {
        let dist = |v: &Vec<f64>| {
            if config.normalize {
                DiscreteDistribution::normalized(v.clone())
            } else {
                DiscreteDistribution::new(v.clone())
            }
        };
        let mut channels = Vec::with_capacity(config.components.len());
        for (u, c) in config.components.iter().enumerate() {
            let p0 = dist(&c.p0)
                .map_err(|e| Error::config(format!("components[{u}].p0"), e.to_string()))?;
            let p1 = dist(&c.p1)
                .map_err(|e| Error::config(format!("components[{u}].p1"), e.to_string()))?;
            let channel = ComponentChannel::new(p0, p1)
                .map_err(|e| Error::config(format!("components[{u}]"), e.to_string()))?;
            channels.push(channel);
        }
        let prior = if config.normalize {
            DiscreteDistribution::normalized(config.prior.clone())
                .map(|d| d.probs().to_vec())
                .map_err(|e| Error::config("prior", e.to_string()))?
        } else {
            config.prior.clone()
        };
        Self::new(channels, prior).map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("model", other.to_string()),
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let config: ModelConfig = serde_json::from_slice(bytes)?;
        Self::from_config(&config)
    }

    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            components: self
                .channels
                .iter()
                .map(|c| ChannelConfig {
                    p0: c.p0.probs().to_vec(),
                    p1: c.p1.probs().to_vec(),
                })
                .collect(),
            prior: self.prior.clone(),
            normalize: false,
            run: None,
        }
    }

    pub fn num_components(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[ComponentChannel] {
        &self.channels
    }

    pub fn channel(&self, u: usize) -> Result<&ComponentChannel> {
        self.channels.get(u).ok_or(Error::Index {
            what: "component",
            index: u,
            bound: self.channels.len(),
        })
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Prior conditioned on the system being unsafe: `rho(j) / (1 - rho(0))`.
    pub fn anomaly_prior(&self) -> &[f64] {
        &self.anomaly_prior
    }

    pub fn log_anomaly_prior(&self) -> &[f64] {
        &self.log_anomaly_prior
    }

    /// Log-likelihood ratio of the safe hypothesis against "component `j`
    /// is anomalous" for observation `y` of component `u`. Zero unless
    /// `u == j`.
    pub fn llr(&self, u: usize, j: usize, y: usize) -> Result<f64> {
        let channel = self.channel(u)?;
        self.check_component(j)?;
        self.check_symbol(channel, y)?;
        Ok(if u == j { channel.llr(y) } else { 0.0 })
    }

    pub fn sample_observation<R: Rng + ?Sized>(
        &self,
        x: Hypothesis,
        u: usize,
        rng: &mut R,
    ) -> Result<usize> {
        let channel = self.channel(u)?;
        if let Hypothesis::Anomalous(j) = x {
            self.check_component(j)?;
        }
        Ok(channel.sample(x == Hypothesis::Anomalous(u), rng))
    }

    /// True when every component has bitwise-identical `(p0, p1)`.
    pub fn is_homogeneous(&self) -> bool {
        let first = &self.channels[0];
        self.channels
            .iter()
            .all(|c| c.p0.probs() == first.p0.probs() && c.p1.probs() == first.p1.probs())
    }

    pub(crate) fn check_component(&self, j: usize) -> Result<()> {
        if j < self.channels.len() {
            Ok(())
        } else {
            Err(Error::Index {
                what: "component",
                index: j,
                bound: self.channels.len(),
            })
        }
    }

    pub(crate) fn check_symbol(&self, channel: &ComponentChannel, y: usize) -> Result<()> {
        if y < channel.alphabet_size() {
            Ok(())
        } else {
            Err(Error::Index {
                what: "observation symbol",
                index: y,
                bound: channel.alphabet_size(),
            })
        }
    }
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub components: Vec<ChannelConfig>,
    pub prior: Vec<f64>,
    #[serde(default)]
    pub normalize: bool,
    /// Optional run parameters; command-line flags take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<crate::cli::RunDefaults>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
}
