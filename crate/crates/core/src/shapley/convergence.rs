//! Convergence monitor for the permutation sampler.
//!
//! A run is declared converged when, across the last `convergence_window`
//! checkpoints, no point's running mean has moved (max minus min over the
//! window) by more than `convergence_tol` times the current spread of all
//! estimates. The spread is floored at `1e-12` so an all-zero game converges.

use super::sampler::{Checkpoint, SamplerConfig, ShapleyRun};

const RANGE_FLOOR: f64 = 1e-12;

pub fn has_converged(run: &ShapleyRun, sampler: &SamplerConfig) -> bool {
    run.permutations() >= sampler.convergence_window as u64 && window_converged(&run.trace, sampler)
}

pub(crate) fn window_converged(trace: &[Checkpoint], sampler: &SamplerConfig) -> bool {
    let window = sampler.convergence_window;
    if window == 0 || trace.len() < window {
        return false;
    }
    let tail = &trace[trace.len() - window..];
    let current = &tail[window - 1].estimates;
    let (lo, hi) = min_max(current.iter().copied());
    let threshold = sampler.convergence_tol * (hi - lo).max(RANGE_FLOOR);

    (0..current.len()).all(|p| {
        let (lo, hi) = min_max(tail.iter().map(|c| c.estimates[p]));
        hi - lo < threshold
    })
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}
