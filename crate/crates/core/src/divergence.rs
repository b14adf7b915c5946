//! Max-min Kullback-Leibler divergence over component-selection
//! distributions.
//!
//! Probing component `u` only separates the safe hypothesis from "component
//! `u` is anomalous", so the divergence matrix `D_j^u` is diagonal and the
//! saddle point has a closed form: `D* = (sum_u 1/D_u)^-1` with
//! `alpha*(u) = beta*(u) = D*/D_u`.

use serde::{Deserialize, Serialize};

use crate::channels::SystemModel;
use crate::{Error, Result};

/// Saddle point of the max-min divergence problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinSolution {
    pub d_star: f64,
    pub alpha_star: Vec<f64>,
    pub beta_star: Vec<f64>,
}

/// `D(p0^u || p1^u)` for every component.
pub fn per_component_divergence(model: &SystemModel) -> Result<Vec<f64>> {
    let d: Vec<f64> = model.channels().iter().map(|c| c.divergence()).collect();
    if let Some(u) = d.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateModel(format!(
            "component {u} has zero divergence"
        )));
    }
    Ok(d)
}

pub fn max_min_divergence(model: &SystemModel) -> Result<MaxMinSolution> {
    let d = per_component_divergence(model)?;
    let d_star = d.iter().map(|v| v.recip()).sum::<f64>().recip();
    let alpha_star: Vec<f64> = d.iter().map(|v| d_star / v).collect();
    Ok(MaxMinSolution {
        d_star,
        beta_star: alpha_star.clone(),
        alpha_star,
    })
}

/// Largest component count the simplex grid search accepts.
pub const BRUTE_FORCE_MAX_COMPONENTS: usize = 4;

/// Grid search of `max_alpha min_j sum_u alpha(u) D_j^u` over simplex points
/// with coordinates on multiples of `grid_resolution`. Ties keep the first
/// point found. Intended as an independent check on the closed form.
pub fn brute_force_maxmin(model: &SystemModel, grid_resolution: f64) -> Result<(f64, Vec<f64>)> {
    let d = per_component_divergence(model)?;
    let matrix = divergence_matrix(&d);
    let steps = grid_steps(d.len(), grid_resolution)?;
    let mut best = f64::NEG_INFINITY;
    let mut best_point = Vec::new();
    for_each_simplex_point(d.len(), steps, |alpha| {
        let value = (0..d.len())
            .map(|j| (0..d.len()).map(|u| alpha[u] * matrix[j][u]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if value > best {
            best = value;
            best_point = alpha.to_vec();
        }
    });
    Ok((best, best_point))
}

/// Grid search of the dual `min_beta max_u sum_j beta(j) D_j^u`.
pub fn brute_force_minmax(model: &SystemModel, grid_resolution: f64) -> Result<(f64, Vec<f64>)> {
    let d = per_component_divergence(model)?;
    let matrix = divergence_matrix(&d);
    let steps = grid_steps(d.len(), grid_resolution)?;
    let mut best = f64::INFINITY;
    let mut best_point = Vec::new();
    for_each_simplex_point(d.len(), steps, |beta| {
        let value = (0..d.len())
            .map(|u| (0..d.len()).map(|j| beta[j] * matrix[j][u]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        if value < best {
            best = value;
            best_point = beta.to_vec();
        }
    });
    Ok((best, best_point))
}

// matrix[j][u] = D_j^u
fn divergence_matrix(d: &[f64]) -> Vec<Vec<f64>> {
    (0..d.len())
        .map(|j| {
            (0..d.len())
                .map(|u| if u == j { d[u] } else { 0.0 })
                .collect()
        })
        .collect()
}

fn grid_steps(m: usize, resolution: f64) -> Result<usize> {
    if m > BRUTE_FORCE_MAX_COMPONENTS {
        return Err(Error::Unsupported(format!(
            "grid search supports at most {BRUTE_FORCE_MAX_COMPONENTS} components, got {m}"
        )));
    }
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(Error::Domain(format!(
            "grid resolution must lie in (0, 0.1], got {resolution}"
        )));
    }
    Ok((1.0 / resolution).round() as usize)
}

fn for_each_simplex_point(m: usize, steps: usize, mut visit: impl FnMut(&[f64])) {
    fn recurse(
        point: &mut Vec<f64>,
        m: usize,
        remaining: usize,
        steps: usize,
        visit: &mut dyn FnMut(&[f64]),
    ) {
        if point.len() == m - 1 {
            point.push(remaining as f64 / steps as f64);
            visit(point);
            point.pop();
            return;
        }
        for k in 0..=remaining {
            point.push(k as f64 / steps as f64);
            recurse(point, m, remaining - k, steps, visit);
            point.pop();
        }
    }
    let mut point = Vec::with_capacity(m);
    recurse(&mut point, m, steps, steps, &mut visit);
}
