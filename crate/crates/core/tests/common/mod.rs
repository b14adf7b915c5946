#![allow(dead_code)]

use anomaly_verify::channels::{ComponentChannel, DiscreteDistribution, SystemModel};
use anomaly_verify::divergence::{max_min_divergence, MaxMinSolution};
use rand::Rng;

pub fn channel(p0: &[f64], p1: &[f64]) -> ComponentChannel {
    ComponentChannel::new(
        DiscreteDistribution::new(p0.to_vec()).unwrap(),
        DiscreteDistribution::new(p1.to_vec()).unwrap(),
    )
    .unwrap()
}

/// M = 2, p0 = (0.8, 0.2), p1 = (0.2, 0.8), uniform prior with P(safe) = 0.5.
pub fn reference() -> (SystemModel, MaxMinSolution) {
    homogeneous(2)
}

pub fn homogeneous(m: usize) -> (SystemModel, MaxMinSolution) {
    let model = SystemModel::homogeneous(
        channel(&[0.8, 0.2], &[0.2, 0.8]),
        m,
        SystemModel::uniform_prior(m, 0.5),
    )
    .unwrap();
    let solution = max_min_divergence(&model).unwrap();
    (model, solution)
}

pub fn random_pmf<R: Rng>(k: usize, rng: &mut R) -> DiscreteDistribution {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    DiscreteDistribution::normalized(raw).unwrap()
}

/// Heterogeneous model with random alphabets in 2..=4 and a random prior.
pub fn random_model<R: Rng>(m: usize, rng: &mut R) -> (SystemModel, MaxMinSolution) {
    let channels = (0..m)
        .map(|_| {
            let k = rng.gen_range(2..=4);
            loop {
                let p0 = random_pmf(k, rng);
                let p1 = random_pmf(k, rng);
                if let Ok(c) = ComponentChannel::new(p0, p1) {
                    if c.divergence() > 1e-3 {
                        return c;
                    }
                }
            }
        })
        .collect();
    let prior = random_pmf(m + 1, rng).probs().to_vec();
    let model = SystemModel::new(channels, prior).unwrap();
    let solution = max_min_divergence(&model).unwrap();
    (model, solution)
}
