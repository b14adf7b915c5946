//! Converse and achievability bounds on the incorrect-verification exponent.
//!
//! For homogeneous systems the averaged log-likelihood ratio `z_bar` is a sum
//! of i.i.d. increments under the safe hypothesis, whatever the selection
//! strategy. Its exact law is obtained by repeated convolution of the
//! one-step law, and the bounds are quantiles of that law shifted by
//! `D(beta* || rho)`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::channels::{cross_entropy, kl_weights, SystemModel};
use crate::divergence::MaxMinSolution;
use crate::exec::Backend;
use crate::{Error, Result};

pub const DEFAULT_MERGE_TOL: f64 = 1e-12;
pub const DEFAULT_ATOM_CAP: usize = 10_000_000;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
pub const DEFAULT_ETA: f64 = 10.0;

/// Finitely supported law on the real line, atoms sorted by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteValueDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteValueDistribution {
    /// Sorts `(value, probability)` pairs, merges values that agree within
    /// `merge_tol` (relative to `max(1, |value|)`) and drops zero-mass atoms.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>, merge_tol: f64) -> Result<Self> {
        if atoms
            .iter()
            .any(|(v, p)| !v.is_finite() || !(p.is_finite() && *p >= 0.0))
        {
            return Err(Error::InvalidDistribution(
                "atoms need finite values and nonnegative probabilities".into(),
            ));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let atoms = merge_sorted(atoms, merge_tol);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty() || (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDistribution(format!(
                "atom probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.atoms.iter().map(|(v, p)| p * (v - mean).powi(2)).sum()
    }

    /// `E|X - center|^3`.
    pub fn abs_third_moment(&self, center: f64) -> f64 {
        self.atoms
            .iter()
            .map(|(v, p)| p * (v - center).abs().powi(3))
            .sum()
    }

    /// `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|(v, _)| *v <= x)
            .map(|a| a.1)
            .sum()
    }

    /// `P[X < x]`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|(v, _)| *v < x)
            .map(|a| a.1)
            .sum()
    }

    /// `inf { x : P[X <= x] >= p } + offset` for `p` in `(0, 1)`.
    pub fn quantile(&self, p: f64, offset: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        let mut cumulative = 0.0;
        for (value, prob) in &self.atoms {
            cumulative += prob;
            if cumulative >= p {
                return Ok(value + offset);
            }
        }
        // Rounding left the total mass a hair below p.
        Ok(self.atoms[self.atoms.len() - 1].0 + offset)
    }
}

fn merge_sorted(atoms: Vec<(f64, f64)>, merge_tol: f64) -> Vec<(f64, f64)> {
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    // (anchor value, probability-weighted offset from the anchor, mass)
    let mut group: Option<(f64, f64, f64)> = None;
    for (v, p) in atoms {
        if p == 0.0 {
            continue;
        }
        match group.as_mut() {
            Some((anchor, wsum, mass)) if (v - *anchor).abs() <= merge_tol * v.abs().max(1.0) => {
                *wsum += (v - *anchor) * p;
                *mass += p;
            }
            _ => {
                if let Some((anchor, wsum, mass)) = group.take() {
                    merged.push((group_value(anchor, wsum, mass), mass));
                }
                group = Some((v, 0.0, p));
            }
        }
    }
    if let Some((anchor, wsum, mass)) = group {
        merged.push((group_value(anchor, wsum, mass), mass));
    }
    merged
}

// Offsets keep the result within the merge tolerance of the anchor even
// when the masses are subnormal.
fn group_value(anchor: f64, wsum: f64, mass: f64) -> f64 {
    let shift = wsum / mass;
    if shift.is_finite() {
        anchor + shift
    } else {
        anchor
    }
}

/// Law of the one-step increment `L = (1/M) log(p0(Y)/p1(Y))` with `Y ~ p0`.
pub fn l_distribution(
    model: &SystemModel,
    solution: &MaxMinSolution,
) -> Result<DiscreteValueDistribution> {
    if !model.is_homogeneous() {
        return Err(Error::HomogeneityRequired);
    }
    let channel = &model.channels()[0];
    let weight = solution.beta_star[0];
    let atoms = channel
        .p0()
        .probs()
        .iter()
        .zip(channel.llr_table())
        .map(|(p, llr)| (weight * llr, *p))
        .collect();
    DiscreteValueDistribution::from_atoms(atoms, DEFAULT_MERGE_TOL)
}

/// Law of `X + Y` for independent `X ~ a`, `Y ~ b`.
pub fn convolve(
    a: &DiscreteValueDistribution,
    b: &DiscreteValueDistribution,
    merge_tol: f64,
    atom_cap: usize,
) -> Result<DiscreteValueDistribution> {
    let raw = a.len().saturating_mul(b.len());
    if raw > atom_cap {
        return Err(Error::Resource(format!(
            "convolution would produce {raw} atoms (cap {atom_cap}); use the Monte Carlo law instead"
        )));
    }
    let mut atoms = Vec::with_capacity(raw);
    for (va, pa) in a.atoms() {
        for (vb, pb) in b.atoms() {
            atoms.push((va + vb, pa * pb));
        }
    }
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(DiscreteValueDistribution {
        atoms: merge_sorted(atoms, merge_tol),
    })
}

/// Exact `n`-fold convolution of `dist` with itself.
pub fn convolve_n(
    dist: &DiscreteValueDistribution,
    n: usize,
    merge_tol: f64,
) -> Result<DiscreteValueDistribution> {
    convolve_n_capped(dist, n, merge_tol, DEFAULT_ATOM_CAP)
}

pub fn convolve_n_capped(
    dist: &DiscreteValueDistribution,
    n: usize,
    merge_tol: f64,
    atom_cap: usize,
) -> Result<DiscreteValueDistribution> {
    if n == 0 {
        return Err(Error::Domain("convolution power must be at least 1".into()));
    }
    let mut acc = dist.clone();
    for _ in 1..n {
        acc = convolve(&acc, dist, merge_tol, atom_cap)?;
    }
    Ok(acc)
}

/// Empirical law of a sum of `n` i.i.d. draws from `dist`, from `samples`
/// independent replications. Used when exact convolution exceeds the atom cap.
pub fn sampled_sum_distribution(
    dist: &DiscreteValueDistribution,
    n: usize,
    samples: usize,
    seed: u64,
    backend: Backend,
) -> Result<DiscreteValueDistribution> {
    if n == 0 || samples == 0 {
        return Err(Error::Domain("need n >= 1 and at least one sample".into()));
    }
    let values: Vec<f64> = dist.atoms().iter().map(|a| a.0).collect();
    let cumulative: Vec<f64> = dist
        .atoms()
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a.1;
            Some(*acc)
        })
        .collect();
    let sums = backend.map_indexed(samples as u64, |i| {
        let mut rng: ChaCha8Rng =
            crate::exec::stream_rng(seed, crate::exec::Stream::LawSampling, i);
        (0..n)
            .map(|_| {
                let u: f64 = rand::Rng::gen(&mut rng);
                let k = cumulative
                    .iter()
                    .position(|c| u < *c)
                    .unwrap_or(values.len() - 1);
                values[k]
            })
            .sum::<f64>()
    });
    let w = 1.0 / samples as f64;
    let mut atoms: Vec<(f64, f64)> = sums.into_iter().map(|s| (s, w)).collect();
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let atoms = merge_sorted(atoms, DEFAULT_MERGE_TOL);
    Ok(DiscreteValueDistribution { atoms })
}

/// How the law of `z_bar` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawOptions {
    pub merge_tol: f64,
    pub atom_cap: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for LawOptions {
    fn default() -> Self {
        Self {
            merge_tol: DEFAULT_MERGE_TOL,
            atom_cap: DEFAULT_ATOM_CAP,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

/// `D(beta* || rho)`, the shift between `z_bar` and the argument of the
/// quantile function.
pub fn prior_offset(model: &SystemModel, solution: &MaxMinSolution) -> f64 {
    kl_weights(&solution.beta_star, model.anomaly_prior())
}

/// `D*/(1-eps) + (log 2 + H(beta*, rho)) / (N (1-eps))`.
pub fn weak_converse_rate(
    model: &SystemModel,
    solution: &MaxMinSolution,
    n: usize,
    epsilon: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    if n == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    let h = cross_entropy(&solution.beta_star, model.anomaly_prior())?;
    let scale = 1.0 - epsilon;
    Ok(solution.d_star / scale + (std::f64::consts::LN_2 + h) / (n as f64 * scale))
}

pub fn strong_converse(
    model: &SystemModel,
    solution: &MaxMinSolution,
    n: usize,
    epsilon: f64,
    eta: f64,
) -> Result<f64> {
    let calc = BoundCalculator::new(model, solution)?;
    let law = calc.law(n)?;
    calc.strong_converse(&law, epsilon, eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityConstants {
    pub delta: f64,
    pub s_star: f64,
    pub varsigma: f64,
    pub k: f64,
    pub k_prime: f64,
}

/// `m(s) = E0[(p1/p0)^{s(M-1)/M}]` and `m_bar(s) = E0[(p0/p1)^{s/M}]`.
pub fn mgf_pair(model: &SystemModel, s: f64) -> Result<(f64, f64)> {
    if !model.is_homogeneous() {
        return Err(Error::HomogeneityRequired);
    }
    let channel = &model.channels()[0];
    let m = model.num_components() as f64;
    let (mut up, mut down) = (0.0, 0.0);
    for (p, llr) in channel.p0().probs().iter().zip(channel.llr_table()) {
        up += p * (-s * (m - 1.0) / m * llr).exp();
        down += p * (s / m * llr).exp();
    }
    Ok((up, down))
}

/// `(1+delta)(m + (M-1) m_bar) / (1 + delta - M delta)`.
pub fn k_constant(m_s: f64, m_bar_s: f64, num_components: usize, delta: f64) -> f64 {
    let mm = num_components as f64;
    (1.0 + delta) * (m_s + (mm - 1.0) * m_bar_s) / (1.0 + delta - mm * delta)
}

pub fn default_delta(num_components: usize) -> f64 {
    1.0 / (2.0 * (num_components as f64 - 1.0))
}

/// Golden-section search over `s` in `(0, 1)` for the minimiser of
/// `((1+delta)/M) m(s) + (1 - (1+delta)/M) m_bar(s)`; fails when the minimum
/// is not below one.
pub fn achievability_constants(
    model: &SystemModel,
    solution: &MaxMinSolution,
    delta: f64,
) -> Result<AchievabilityConstants> {
    let _ = solution;
    if !model.is_homogeneous() {
        return Err(Error::HomogeneityRequired);
    }
    let mm = model.num_components();
    if mm < 2 {
        return Err(Error::Domain(
            "achievability constants need at least two components".into(),
        ));
    }
    let delta_max = 1.0 / (mm as f64 - 1.0);
    if !(delta >= 0.0 && delta < delta_max) {
        return Err(Error::Domain(format!(
            "delta must lie in [0, {delta_max}), got {delta}"
        )));
    }
    let weight = (1.0 + delta) / mm as f64;
    let varsigma_at = |s: f64| -> f64 {
        let (m_s, m_bar_s) = mgf_pair(model, s).expect("homogeneity checked");
        weight * m_s + (1.0 - weight) * m_bar_s
    };
    let s_star = golden_section_min(varsigma_at, 0.0, 1.0, 1e-6);
    let varsigma = varsigma_at(s_star);
    if !(varsigma < 1.0) {
        return Err(Error::ConstantsUnavailable(format!(
            "minimum of varsigma over (0, 1) is {varsigma} at s = {s_star}"
        )));
    }
    let (m_s, m_bar_s) = mgf_pair(model, s_star)?;
    let k = k_constant(m_s, m_bar_s, mm, delta);
    Ok(AchievabilityConstants {
        delta,
        s_star,
        varsigma,
        k,
        k_prime: mm as f64 + k / (1.0 - varsigma),
    })
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityThreshold {
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// False when no valid constants were found and `theta1` was set to zero.
    pub constants_available: bool,
}

pub fn achievability_threshold(
    model: &SystemModel,
    solution: &MaxMinSolution,
    n: usize,
    epsilon: f64,
    eta: f64,
    delta: f64,
) -> Result<AchievabilityThreshold> {
    let calc = BoundCalculator::new(model, solution)?;
    let law = calc.law(n)?;
    calc.achievability_threshold(&law, epsilon, eta, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseen {
    /// `N D* - sqrt(N V) Qinv(eps + eps/eta + 6T/sqrt(N V^3))`, if defined.
    pub upper: Option<f64>,
    /// `N D* - sqrt(N V) Qinv(eps - eps/eta - 6T/sqrt(N V^3))`, if defined.
    pub lower: Option<f64>,
    pub v: f64,
    pub t: f64,
    /// `log(eta/eps)`, the order of the omitted terms.
    pub log_term: f64,
}

pub fn berry_esseen_bounds(
    model: &SystemModel,
    solution: &MaxMinSolution,
    n: usize,
    epsilon: f64,
    eta: f64,
) -> Result<BerryEsseen> {
    BoundCalculator::new(model, solution)?.berry_esseen(n, epsilon, eta)
}

/// Inverse of the standard normal tail function.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "Q^-1 argument must lie in (0, 1), got {p}"
        )));
    }
    Ok(-standard_normal().inverse_cdf(p))
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 1.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "eta must be finite and exceed 1, got {eta}"
        )))
    }
}

/// Evaluated bounds for one `(N, eps, eta)`. Quantities that are undefined
/// for the inputs (heterogeneous model, level outside `(0, 1)`) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub epsilon: f64,
    pub eta: f64,
    #[serde(rename = "weak_rate")]
    pub weak_converse_rate: f64,
    pub strong_converse: Option<f64>,
    #[serde(rename = "achievability_theta")]
    pub achievability: Option<f64>,
    #[serde(rename = "be_upper_main")]
    pub be_upper: Option<f64>,
    #[serde(rename = "be_lower_main")]
    pub be_lower: Option<f64>,
    pub log_term: f64,
    pub v: Option<f64>,
    pub t: Option<f64>,
}

/// Precomputed per-model quantities shared by every bound evaluation.
#[derive(Debug, Clone)]
pub struct BoundCalculator<'a> {
    model: &'a SystemModel,
    solution: &'a MaxMinSolution,
    step: Option<DiscreteValueDistribution>,
    offset: f64,
    pub options: LawOptions,
}

impl<'a> BoundCalculator<'a> {
    /// Works for any model; quantile-based bounds need homogeneity and fail
    /// with [`Error::HomogeneityRequired`] otherwise.
    pub fn new(model: &'a SystemModel, solution: &'a MaxMinSolution) -> Result<Self> {
        let step = if model.is_homogeneous() {
            Some(l_distribution(model, solution)?)
        } else {
            None
        };
        Ok(Self {
            model,
            solution,
            step,
            offset: prior_offset(model, solution),
            options: LawOptions::default(),
        })
    }

    pub fn with_options(mut self, options: LawOptions) -> Self {
        self.options = options;
        self
    }

    pub fn step(&self) -> Result<&DiscreteValueDistribution> {
        self.step.as_ref().ok_or(Error::HomogeneityRequired)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Law of `z_bar` after `n` steps: exact, or sampled if the atom cap is hit.
    pub fn law(&self, n: usize) -> Result<DiscreteValueDistribution> {
        Ok(self.law_with_method(n)?.0)
    }

    pub fn law_with_method(&self, n: usize) -> Result<(DiscreteValueDistribution, LawMethod)> {
        let step = self.step()?;
        match convolve_n_capped(step, n, self.options.merge_tol, self.options.atom_cap) {
            Ok(law) => Ok((law, LawMethod::Exact)),
            Err(Error::Resource(_)) => Ok((
                sampled_sum_distribution(
                    step,
                    n,
                    self.options.mc_samples,
                    self.options.seed,
                    Backend::default(),
                )?,
                LawMethod::MonteCarlo,
            )),
            Err(e) => Err(e),
        }
    }

    /// Quantile of `z_bar + D(beta* || rho)`.
    pub fn inv(&self, law: &DiscreteValueDistribution, p: f64) -> Result<f64> {
        law.quantile(p, self.offset)
    }

    pub fn strong_converse(
        &self,
        law: &DiscreteValueDistribution,
        epsilon: f64,
        eta: f64,
    ) -> Result<f64> {
        check_epsilon(epsilon)?;
        check_eta(eta)?;
        Ok(self.inv(law, epsilon + epsilon / eta)? + (eta / epsilon).ln())
    }

    pub fn achievability_threshold(
        &self,
        law: &DiscreteValueDistribution,
        epsilon: f64,
        eta: f64,
        delta: f64,
    ) -> Result<AchievabilityThreshold> {
        check_epsilon(epsilon)?;
        check_eta(eta)?;
        let theta2 = self.inv(law, epsilon - epsilon / eta)?;
        let mm = self.model.num_components();
        if mm == 1 {
            // The posterior is a point mass, so the divergence term is zero.
            return Ok(AchievabilityThreshold {
                theta: theta2,
                theta1: 0.0,
                theta2,
                constants_available: true,
            });
        }
        match achievability_constants(self.model, self.solution, delta) {
            Ok(c) => {
                let theta1 = (epsilon / (eta * c.k_prime)).ln() / c.s_star + (mm as f64).ln();
                Ok(AchievabilityThreshold {
                    theta: theta1 + theta2,
                    theta1,
                    theta2,
                    constants_available: true,
                })
            }
            Err(Error::ConstantsUnavailable(_)) => Ok(AchievabilityThreshold {
                theta: theta2,
                theta1: 0.0,
                theta2,
                constants_available: false,
            }),
            Err(e) => Err(e),
        }
    }

    /// `V` and `T` of the one-step increment about its mean `D*`.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let step = self.step()?;
        let d_star = self.solution.d_star;
        let v = step
            .atoms()
            .iter()
            .map(|(x, p)| p * (x - d_star).powi(2))
            .sum();
        Ok((v, step.abs_third_moment(d_star)))
    }

    pub fn berry_esseen(&self, n: usize, epsilon: f64, eta: f64) -> Result<BerryEsseen> {
        check_epsilon(epsilon)?;
        check_eta(eta)?;
        let (v, t) = self.moments()?;
        let nf = n as f64;
        let spread = (nf * v).sqrt();
        let be_error = 6.0 * t / (nf * v.powi(3)).sqrt();
        let centre = nf * self.solution.d_star;
        let main = |level: f64| q_inverse(level).ok().map(|q| centre - spread * q);
        Ok(BerryEsseen {
            upper: main(epsilon + epsilon / eta + be_error),
            lower: main(epsilon - epsilon / eta - be_error),
            v,
            t,
            log_term: (eta / epsilon).ln(),
        })
    }

    pub fn report(&self, n: usize, epsilon: f64, eta: f64, delta: f64) -> Result<BoundReport> {
        let law = match self.step {
            Some(_) => Some(self.law(n)?),
            None => None,
        };
        self.report_with_law(law.as_ref(), n, epsilon, eta, delta)
    }

    /// Report for horizon `n` given the law of `z_bar` at `n` (pass `None`
    /// for heterogeneous models).
    pub fn report_with_law(
        &self,
        law: Option<&DiscreteValueDistribution>,
        n: usize,
        epsilon: f64,
        eta: f64,
        delta: f64,
    ) -> Result<BoundReport> {
        check_eta(eta)?;
        let weak = weak_converse_rate(self.model, self.solution, n, epsilon)?;
        let mut report = BoundReport {
            n,
            epsilon,
            eta,
            weak_converse_rate: weak,
            strong_converse: None,
            achievability: None,
            be_upper: None,
            be_lower: None,
            log_term: (eta / epsilon).ln(),
            v: None,
            t: None,
        };
        if let Some(law) = law {
            report.strong_converse = self.strong_converse(law, epsilon, eta).ok();
            report.achievability = self
                .achievability_threshold(law, epsilon, eta, delta)
                .ok()
                .map(|a| a.theta);
            let be = self.berry_esseen(n, epsilon, eta)?;
            report.be_upper = be.upper;
            report.be_lower = be.lower;
            report.v = Some(be.v);
            report.t = Some(be.t);
        }
        Ok(report)
    }

    /// Reports for increasing horizons, reusing each convolution for the next.
    pub fn reports(
        &self,
        ns: &[usize],
        epsilon_at: impl Fn(usize) -> f64,
        eta: f64,
        delta: f64,
    ) -> Result<Vec<BoundReport>> {
        let mut sorted: Vec<usize> = ns.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut out = Vec::with_capacity(sorted.len());
        let Some(step) = self.step.as_ref() else {
            for &n in &sorted {
                out.push(self.report_with_law(None, n, epsilon_at(n), eta, delta)?);
            }
            return Ok(out);
        };
        let mut current: Option<(usize, DiscreteValueDistribution)> = None;
        for &n in &sorted {
            if n == 0 {
                return Err(Error::Domain("horizon must be at least 1".into()));
            }
            let exact = match current.take() {
                Some((k, law)) => (k..n).try_fold(law, |acc, _| {
                    convolve(&acc, step, self.options.merge_tol, self.options.atom_cap)
                }),
                None => convolve_n_capped(step, n, self.options.merge_tol, self.options.atom_cap),
            };
            let law = match exact {
                Ok(law) => {
                    current = Some((n, law.clone()));
                    law
                }
                Err(Error::Resource(_)) => self.law(n)?,
                Err(e) => return Err(e),
            };
            out.push(self.report_with_law(Some(&law), n, epsilon_at(n), eta, delta)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ComponentChannel, DiscreteDistribution};
    use crate::divergence::max_min_divergence;
    use approx::assert_abs_diff_eq;

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

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn step_law() {
        let (m, s) = reference();
        let l = l_distribution(&m, &s).unwrap();
        assert_eq!(l.len(), 2);
        assert_abs_diff_eq!(l.atoms()[0].0, -0.6931472, epsilon = 1e-7);
        assert_abs_diff_eq!(l.atoms()[0].1, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(l.atoms()[1].0, 0.6931472, epsilon = 1e-7);
        assert_abs_diff_eq!(l.atoms()[1].1, 0.8, epsilon = 1e-15);
        assert!((l.mean() - s.d_star).abs() < 1e-12);
        assert_abs_diff_eq!(l.mean(), 0.4158883, epsilon = 1e-7);
    }

    #[test]
    fn step_law_requires_homogeneity() {
        let a = ComponentChannel::new(
            DiscreteDistribution::new(vec![0.8, 0.2]).unwrap(),
            DiscreteDistribution::new(vec![0.2, 0.8]).unwrap(),
        )
        .unwrap();
        let b = ComponentChannel::new(
            DiscreteDistribution::new(vec![0.7, 0.3]).unwrap(),
            DiscreteDistribution::new(vec![0.2, 0.8]).unwrap(),
        )
        .unwrap();
        let m = SystemModel::new(vec![a, b], SystemModel::uniform_prior(2, 0.5)).unwrap();
        let s = max_min_divergence(&m).unwrap();
        assert!(matches!(
            l_distribution(&m, &s),
            Err(Error::HomogeneityRequired)
        ));
        assert!(matches!(
            strong_converse(&m, &s, 3, 0.1, 2.0),
            Err(Error::HomogeneityRequired)
        ));
        assert!(weak_converse_rate(&m, &s, 3, 0.1).is_ok());
        let r = BoundCalculator::new(&m, &s)
            .unwrap()
            .report(3, 0.1, 2.0, 0.25)
            .unwrap();
        assert!(r.strong_converse.is_none() && r.v.is_none());
    }

    #[test]
    fn two_fold_convolution() {
        let (m, s) = reference();
        let l = l_distribution(&m, &s).unwrap();
        let two = convolve_n(&l, 2, DEFAULT_MERGE_TOL).unwrap();
        let expected = [(-2.0 * LN2, 0.04), (0.0, 0.32), (2.0 * LN2, 0.64)];
        assert_eq!(two.len(), 3);
        for ((v, p), (ev, ep)) in two.atoms().iter().zip(expected) {
            assert_abs_diff_eq!(*v, ev, epsilon = 1e-12);
            assert_abs_diff_eq!(*p, ep, epsilon = 1e-12);
        }
        assert_eq!(convolve_n(&l, 1, DEFAULT_MERGE_TOL).unwrap(), l);
        assert!(convolve_n(&l, 0, DEFAULT_MERGE_TOL).is_err());
    }

    #[test]
    fn convolution_cap() {
        let (m, s) = reference();
        let l = l_distribution(&m, &s).unwrap();
        let err = convolve_n_capped(&l, 10, DEFAULT_MERGE_TOL, 8).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn monte_carlo_fallback_engages() {
        let (m, s) = reference();
        let calc = BoundCalculator::new(&m, &s)
            .unwrap()
            .with_options(LawOptions {
                atom_cap: 4,
                mc_samples: 20_000,
                seed: 5,
                ..LawOptions::default()
            });
        let (law, method) = calc.law_with_method(10).unwrap();
        assert_eq!(method, LawMethod::MonteCarlo);
        assert!((law.total_mass() - 1.0).abs() < 1e-9);
        assert!((law.mean() - 10.0 * s.d_star).abs() < 0.05);
        let (_, method) = calc.law_with_method(2).unwrap();
        assert_eq!(method, LawMethod::Exact);
    }

    #[test]
    fn quantile_examples() {
        let (m, s) = reference();
        let l = l_distribution(&m, &s).unwrap();
        assert_abs_diff_eq!(l.quantile(0.1, 0.0).unwrap(), -0.6931472, epsilon = 1e-7);
        assert_abs_diff_eq!(l.quantile(0.2, 0.0).unwrap(), -0.6931472, epsilon = 1e-7);
        assert_abs_diff_eq!(l.quantile(0.5, 0.0).unwrap(), 0.6931472, epsilon = 1e-7);
        assert_abs_diff_eq!(l.quantile(0.5, 1.0).unwrap(), 1.6931472, epsilon = 1e-7);
        assert!(l.quantile(0.0, 0.0).is_err());
        assert!(l.quantile(1.0, 0.0).is_err());
    }

    #[test]
    fn weak_converse_examples() {
        let (m, s) = reference();
        assert_abs_diff_eq!(
            weak_converse_rate(&m, &s, 10, 0.1).unwrap(),
            0.6161308,
            epsilon = 1e-7
        );
        let far = weak_converse_rate(&m, &s, 1_000_000, 0.1).unwrap();
        assert!((far - 0.4620981).abs() < 1e-5);
        let tight = weak_converse_rate(&m, &s, 100_000_000, 1e-9).unwrap();
        assert!((tight - s.d_star).abs() < 1e-6);
        assert!(weak_converse_rate(&m, &s, 10, 1.0).is_err());
    }

    #[test]
    fn strong_converse_examples() {
        let (m, s) = reference();
        let v = strong_converse(&m, &s, 1, 0.15, 2.0).unwrap();
        assert_abs_diff_eq!(v, LN2 + (2.0f64 / 0.15).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 3.2834144, epsilon = 1e-7);
        // 0.6 + 0.6/1.5 = 1 is outside (0, 1)
        assert!(matches!(
            strong_converse(&m, &s, 1, 0.6, 1.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            strong_converse(&m, &s, 1, 0.1, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn quantile_term_grows_with_level() {
        let (m, s) = reference();
        let calc = BoundCalculator::new(&m, &s).unwrap();
        let law = calc.law(40).unwrap();
        let eps = 0.1;
        // eta = 2 gives level 0.15, eta = 10 gives 0.11
        let q_low = calc.inv(&law, eps + eps / 10.0).unwrap();
        let q_high = calc.inv(&law, eps + eps / 2.0).unwrap();
        assert!(q_high >= q_low);
    }

    #[test]
    fn constants_reference() {
        let (m, s) = reference();
        let c = achievability_constants(&m, &s, 0.2).unwrap();
        assert!(c.varsigma < 1.0 && c.s_star > 0.0 && c.s_star < 1.0);
        assert!(c.k_prime > 1.0);
        assert_eq!(mgf_pair(&m, 0.0).unwrap(), (1.0, 1.0));
        let (a, b) = mgf_pair(&m, 0.3).unwrap();
        assert_eq!(k_constant(a, b, 2, 0.0), a + b);
        // delta = 0 has zero slope at s = 0 and a convex objective
        assert!(matches!(
            achievability_constants(&m, &s, 0.0),
            Err(Error::ConstantsUnavailable(_))
        ));
        assert!(matches!(
            achievability_constants(&m, &s, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn threshold_examples() {
        let (m, s) = reference();
        let a = achievability_threshold(&m, &s, 1, 0.3, 2.0, 0.25).unwrap();
        assert_abs_diff_eq!(a.theta2, -0.6931472, epsilon = 1e-7);
        assert!(a.theta1 <= 2f64.ln());
        assert!(a.constants_available);
        assert_abs_diff_eq!(a.theta, a.theta1 + a.theta2, epsilon = 1e-15);
        let fallback = achievability_threshold(&m, &s, 1, 0.3, 2.0, 0.0).unwrap();
        assert!(!fallback.constants_available);
        assert_eq!(fallback.theta1, 0.0);
    }

    #[test]
    fn theta2_shares_quantile_path() {
        let (m, s) = reference();
        let calc = BoundCalculator::new(&m, &s).unwrap();
        let law = calc.law(25).unwrap();
        let (eps, eta) = (0.2, 4.0);
        let a = calc.achievability_threshold(&law, eps, eta, 0.25).unwrap();
        assert_eq!(a.theta2, calc.inv(&law, eps - eps / eta).unwrap());
        let sc = calc.strong_converse(&law, eps, eta).unwrap();
        assert_eq!(
            sc - (eta / eps).ln(),
            calc.inv(&law, eps + eps / eta).unwrap()
        );
    }

    #[test]
    fn berry_esseen_moments() {
        let (m, s) = reference();
        let be = berry_esseen_bounds(&m, &s, 100, 0.1, 10.0).unwrap();
        assert_abs_diff_eq!(be.v, 0.3074899, epsilon = 1e-6);
        assert_abs_diff_eq!(be.t, 0.2898647, epsilon = 1e-6);
        assert_abs_diff_eq!(be.log_term, 100f64.ln(), epsilon = 1e-12);
        // at N = 1 both arguments leave (0, 1)
        let be1 = berry_esseen_bounds(&m, &s, 1, 0.1, 10.0).unwrap();
        assert!(be1.upper.is_none() && be1.lower.is_none());
    }

    #[test]
    fn q_inverse_values() {
        assert_eq!(q_inverse(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(q_inverse(0.025).unwrap(), 1.959963984540054, epsilon = 1e-9);
        assert_abs_diff_eq!(
            q_inverse(0.975).unwrap(),
            -1.959963984540054,
            epsilon = 1e-9
        );
        assert!(q_inverse(1.0).is_err());
    }

    #[test]
    fn reports_match_direct_evaluation() {
        let (m, s) = reference();
        let calc = BoundCalculator::new(&m, &s).unwrap();
        let rs = calc.reports(&[30, 5, 12], |_| 0.1, 10.0, 0.25).unwrap();
        assert_eq!(rs.iter().map(|r| r.n).collect::<Vec<_>>(), vec![5, 12, 30]);
        for r in &rs {
            let direct = calc.report(r.n, 0.1, 10.0, 0.25).unwrap();
            assert_eq!(r, &direct);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn convolution_moments_scale(
                weights in prop::collection::vec(0.05f64..1.0, 2..5),
                values in prop::collection::vec(-2.0f64..2.0, 5),
                n in 1usize..12,
            ) {
                let total: f64 = weights.iter().sum();
                let atoms: Vec<(f64, f64)> = weights.iter().zip(&values).map(|(w, v)| (*v, w / total)).collect();
                let base = DiscreteValueDistribution::from_atoms(atoms, DEFAULT_MERGE_TOL).unwrap();
                let law = convolve_n(&base, n, DEFAULT_MERGE_TOL).unwrap();
                prop_assert!((law.total_mass() - 1.0).abs() < 1e-10);
                prop_assert!((law.mean() - n as f64 * base.mean()).abs() < 1e-9);
                prop_assert!((law.variance() - n as f64 * base.variance()).abs() < 1e-9);
            }

            #[test]
            fn quantile_is_generalized_inverse(p in 0.001f64..0.999, q in 0.001f64..0.999, n in 1usize..20) {
                let (m, s) = reference();
                let law = convolve_n(&l_distribution(&m, &s).unwrap(), n, DEFAULT_MERGE_TOL).unwrap();
                let x = law.quantile(p, 0.0).unwrap();
                prop_assert!(law.cdf(x) >= p);
                prop_assert!(law.cdf_left(x) < p);
                let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
                prop_assert!(law.quantile(lo, 0.0).unwrap() <= law.quantile(hi, 0.0).unwrap());
            }
        }
    }
}
