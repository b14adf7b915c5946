//! Trial execution backends and per-trial random streams.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, stream,
//! index)`, and results are collected in index order, so the output of a
//! run does not depend on the backend or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random-stream families derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    /// Trials under the safe hypothesis.
    Safe = 1,
    /// Trials under an anomaly drawn from the conditional prior.
    Unsafe = 2,
    /// Threshold calibration, disjoint from evaluation.
    Calibration = 3,
    /// Sampled law of `z_bar`.
    LawSampling = 4,
    /// Step-level diagnostics that run one long trajectory.
    Diagnostic = 5,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a seed and a sequence of labels.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(seed), |acc, l| mix64(acc ^ mix64(*l)))
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream as u64]));
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    /// Rayon's current thread pool; run inside `ThreadPool::install` to pick
    /// the worker count.
    #[cfg(feature = "parallel")]
    #[default]
    Rayon,
}

impl Backend {
    /// `(0..count).map(f)` collected in index order.
    pub fn map_indexed<T, F>(self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        match self {
            Backend::Sequential => (0..count).map(f).collect(),
            #[cfg(feature = "parallel")]
            Backend::Rayon => {
                use rayon::prelude::*;
                (0..count).into_par_iter().map(f).collect()
            }
        }
    }

    /// Runs `f` with `threads` workers when the rayon backend is active.
    pub fn with_threads<R: Send>(self, threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
        match (self, threads) {
            #[cfg(feature = "parallel")]
            (Backend::Rayon, Some(n)) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool construction")
                .install(f),
            _ => f(),
        }
    }
}
