//! Exhaustive search over deterministic selection trees for tiny instances.
//!
//! With the selection strategy fixed, the whole record `(u_1..u_N, y_1..y_N)`
//! is a single observation whose law is `P` under the safe hypothesis and the
//! prior mixture `Q` otherwise. The Neyman-Pearson lemma then gives the least
//! `Q`-mass of a (randomized) acceptance region with `P`-mass at least
//! `1 - eps`. Minimising over every deterministic tree gives an upper bound
//! on the optimal incorrect-verification probability.

use serde::{Deserialize, Serialize};

use crate::channels::SystemModel;
use crate::{Error, Result};

pub const ORACLE_MAX_COMPONENTS: usize = 2;
pub const ORACLE_MAX_ALPHABET: usize = 2;
pub const ORACLE_MAX_HORIZON: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub phi_opt: f64,
    /// Component probed at each internal node, nodes in breadth-first order
    /// (children of node `k` are `k * |Y| + 1 + y`), joined by `-`.
    pub best_tree: String,
    pub trees_searched: u64,
}

pub fn brute_force_small(model: &SystemModel, n: usize, epsilon: f64) -> Result<OracleResult> {
    let m = model.num_components();
    let alphabet = model.channels()[0].alphabet_size();
    if m > ORACLE_MAX_COMPONENTS
        || model
            .channels()
            .iter()
            .any(|c| c.alphabet_size() != alphabet)
        || alphabet > ORACLE_MAX_ALPHABET
        || n > ORACLE_MAX_HORIZON
    {
        return Err(Error::Unsupported(format!(
            "oracle handles M <= {ORACLE_MAX_COMPONENTS}, |Y| <= {ORACLE_MAX_ALPHABET}, N <= {ORACLE_MAX_HORIZON} \
             with a shared alphabet; got M = {m}, |Y| = {alphabet}, N = {n}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("oracle horizon must be at least 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }

    let internal_nodes: usize = (0..n).map(|d| alphabet.pow(d as u32)).sum();
    let mut tree = vec![0usize; internal_nodes];
    let mut best = f64::INFINITY;
    let mut best_tree = tree.clone();
    let mut searched = 0u64;
    let mut leaves = Vec::with_capacity(alphabet.pow(n as u32));
    loop {
        leaves.clear();
        collect_leaves(
            model,
            &tree,
            alphabet,
            0,
            n,
            1.0,
            &mut vec![1.0; m],
            &mut leaves,
        );
        let phi = neyman_pearson_min_q(&mut leaves, 1.0 - epsilon);
        searched += 1;
        if phi < best {
            best = phi;
            best_tree.clone_from(&tree);
        }
        // odometer over component choices
        let mut k = 0;
        while k < tree.len() {
            tree[k] += 1;
            if tree[k] < m {
                break;
            }
            tree[k] = 0;
            k += 1;
        }
        if k == tree.len() {
            break;
        }
    }
    Ok(OracleResult {
        phi_opt: best,
        best_tree: best_tree
            .iter()
            .map(|u| u.to_string())
            .collect::<Vec<_>>()
            .join("-"),
        trees_searched: searched,
    })
}

/// Pushes `(P, Q)` for every leaf below `node`; `q_by_anomaly[j]` is the
/// path probability under "component `j` is anomalous".
#[allow(clippy::too_many_arguments)]
fn collect_leaves(
    model: &SystemModel,
    tree: &[usize],
    alphabet: usize,
    node: usize,
    remaining: usize,
    p: f64,
    q_by_anomaly: &mut Vec<f64>,
    leaves: &mut Vec<(f64, f64)>,
) {
    if remaining == 0 {
        let q = q_by_anomaly
            .iter()
            .zip(model.anomaly_prior())
            .map(|(qj, w)| qj * w)
            .sum();
        leaves.push((p, q));
        return;
    }
    let u = tree[node];
    let channel = &model.channels()[u];
    for y in 0..alphabet {
        let p0 = channel.p0().probs()[y];
        let p1 = channel.p1().probs()[y];
        let saved = q_by_anomaly.clone();
        for (j, qj) in q_by_anomaly.iter_mut().enumerate() {
            *qj *= if j == u { p1 } else { p0 };
        }
        collect_leaves(
            model,
            tree,
            alphabet,
            node * alphabet + 1 + y,
            remaining - 1,
            p * p0,
            q_by_anomaly,
            leaves,
        );
        *q_by_anomaly = saved;
    }
}

/// Least `Q`-mass of a randomized region with `P`-mass at least `need`:
/// admit outcomes in decreasing `P/Q` order, splitting the last one.
pub(crate) fn neyman_pearson_min_q(leaves: &mut [(f64, f64)], need: f64) -> f64 {
    leaves.sort_by(|a, b| (b.0 / b.1).total_cmp(&(a.0 / a.1)));
    let mut p_mass = 0.0;
    let mut q_mass = 0.0;
    for &(p, q) in leaves.iter() {
        if p_mass >= need {
            break;
        }
        let take = ((need - p_mass) / p).min(1.0);
        p_mass += take * p;
        q_mass += take * q;
    }
    q_mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ComponentChannel, DiscreteDistribution};

    fn reference(m: usize) -> SystemModel {
        let ch = ComponentChannel::new(
            DiscreteDistribution::new(vec![0.8, 0.2]).unwrap(),
            DiscreteDistribution::new(vec![0.2, 0.8]).unwrap(),
        )
        .unwrap();
        SystemModel::homogeneous(ch, m, SystemModel::uniform_prior(m, 0.5)).unwrap()
    }

    #[test]
    fn single_step_values() {
        // Outcome y = 0: P = 0.8, Q = 0.5; y = 1: P = 0.2, Q = 0.5.
        let r = brute_force_small(&reference(2), 1, 0.2).unwrap();
        assert!((r.phi_opt - 0.5).abs() < 1e-15, "{r:?}");
        assert_eq!(r.trees_searched, 2);
        // P-mass 0.75 needs 0.9375 of the y = 0 outcome.
        let r = brute_force_small(&reference(2), 1, 0.25).unwrap();
        assert!((r.phi_opt - 0.46875).abs() < 1e-15);
        // P-mass 0.9 takes y = 0 and half of y = 1.
        let r = brute_force_small(&reference(2), 1, 0.1).unwrap();
        assert!((r.phi_opt - 0.75).abs() < 1e-15);
    }

    #[test]
    fn symmetric_single_step_trees() {
        let m = reference(2);
        let value = |u: usize| {
            let mut leaves = Vec::new();
            collect_leaves(&m, &[u], 2, 0, 1, 1.0, &mut vec![1.0; 2], &mut leaves);
            neyman_pearson_min_q(&mut leaves, 0.75)
        };
        assert_eq!(value(0), value(1));
    }

    #[test]
    fn tree_counts() {
        let r = brute_force_small(&reference(2), 3, 0.1).unwrap();
        assert_eq!(r.trees_searched, 1 << 7);
        assert_eq!(r.best_tree.split('-').count(), 7);
        let r = brute_force_small(&reference(1), 2, 0.1).unwrap();
        assert_eq!(r.trees_searched, 1);
    }

    #[test]
    fn more_steps_never_hurt() {
        let m = reference(2);
        let phis: Vec<f64> = (1..=4)
            .map(|n| brute_force_small(&m, n, 0.1).unwrap().phi_opt)
            .collect();
        for w in phis.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{phis:?}");
        }
    }

    #[test]
    fn limits() {
        assert!(matches!(
            brute_force_small(&reference(3), 1, 0.1),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            brute_force_small(&reference(2), 5, 0.1),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            brute_force_small(&reference(2), 1, 1.0),
            Err(Error::Domain(_))
        ));
    }
}
