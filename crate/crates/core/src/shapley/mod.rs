//! Shapley value engines.
//!
//! Both engines work on a [`Game`]: anything that can score a coalition given
//! as sorted player positions. [`MetricGame`] is the data-valuation game, in
//! which a coalition's value is the test score of a classifier fitted on it.
//! A single game may produce several outputs at once (one per metric), so the
//! expensive fit is shared by every metric evaluated over the same coalition.

mod convergence;
mod exact;
mod sampler;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::metrics::{score, MetricKind, Score, UtilityOracle};

pub use convergence::has_converged;
pub use exact::{exact_shapley, exact_shapley_multi, exact_values, DEFAULT_EXACT_CAP};
pub use sampler::{
    mc_shapley, mc_shapley_multi, permutation_for, sample_values, Checkpoint, SampledValues,
    SamplerConfig, ShapleyRun, TELESCOPING_TOL,
};

/// A cooperative game over `players()` players with one or more value outputs.
pub trait Game: Sync {
    fn players(&self) -> usize;

    fn outputs(&self) -> usize;

    /// Writes the value of the coalition `rows` (sorted, distinct player
    /// positions) for every output into `out`.
    fn values(&self, rows: &[usize], out: &mut [f64]) -> Result<()>;
}

/// The data-valuation game: `V(S)` for each requested metric.
pub struct MetricGame<'o, 'a> {
    oracle: &'o UtilityOracle<'a>,
    kinds: Vec<MetricKind>,
}

impl<'o, 'a> MetricGame<'o, 'a> {
    pub fn new(oracle: &'o UtilityOracle<'a>, kinds: &[MetricKind]) -> Self {
        MetricGame {
            oracle,
            kinds: kinds.to_vec(),
        }
    }

    pub fn kinds(&self) -> &[MetricKind] {
        &self.kinds
    }
}

impl Game for MetricGame<'_, '_> {
    fn players(&self) -> usize {
        self.oracle.train().len()
    }

    fn outputs(&self) -> usize {
        self.kinds.len()
    }

    fn values(&self, rows: &[usize], out: &mut [f64]) -> Result<()> {
        let counts = self.oracle.counts_sorted_rows(rows)?;
        for (slot, &kind) in out.iter_mut().zip(&self.kinds) {
            *slot = score(&counts, kind)?.value();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// Shapley value of every training point, in canonical id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyVector {
    pub ids: Vec<u64>,
    pub values: Vec<f64>,
    pub metric: MetricKind,
    pub method: Method,
    /// Zero for exact results.
    pub n_permutations: u64,
}

impl ShapleyVector {
    pub fn get(&self, id: u64) -> Option<f64> {
        self.ids.binary_search(&id).ok().map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.ids.iter().copied().zip(self.values.iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// `Σ SV_i − (V(D) − V(∅))`; zero for any efficient allocation.
pub fn efficiency_gap(sv: &ShapleyVector, v_full: Score, v_empty: Score) -> f64 {
    sv.total() - (v_full.value() - v_empty.value())
}

/// `V(D)` and `V(∅)` for one metric, for use with [`efficiency_gap`].
pub fn grand_and_empty(
    train: &Dataset,
    test: &Dataset,
    kind: MetricKind,
    config: &crate::model::TrainConfig,
) -> Result<(Score, Score)> {
    let oracle = UtilityOracle::new(train, test, config.clone())?;
    let all: Vec<usize> = (0..train.len()).collect();
    let full = score(&oracle.counts_sorted_rows(&all)?, kind)?;
    let empty = score(&oracle.counts_sorted_rows(&[])?, kind)?;
    Ok((full, empty))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Game with an explicit value per coalition bitmask.
    pub struct TableGame {
        pub n: usize,
        pub table: Vec<f64>,
    }

    impl Game for TableGame {
        fn players(&self) -> usize {
            self.n
        }
        fn outputs(&self) -> usize {
            1
        }
        fn values(&self, rows: &[usize], out: &mut [f64]) -> Result<()> {
            let mask: usize = rows.iter().map(|r| 1 << r).sum();
            out[0] = self.table[mask];
            Ok(())
        }
    }

    /// Value = Σ weights of members, so each player's SV is its own weight.
    pub struct AdditiveGame(pub Vec<f64>);

    impl Game for AdditiveGame {
        fn players(&self) -> usize {
            self.0.len()
        }
        fn outputs(&self) -> usize {
            1
        }
        fn values(&self, rows: &[usize], out: &mut [f64]) -> Result<()> {
            out[0] = rows.iter().map(|&r| self.0[r]).sum();
            Ok(())
        }
    }
}
