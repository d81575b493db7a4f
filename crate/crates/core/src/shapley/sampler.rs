//! Permutation-sampling Monte Carlo estimator.
//!
//! Permutation `j` is drawn from its own ChaCha stream `(seed, j)`, so the
//! sequence of sampled orderings depends only on the seed. Permutations are
//! evaluated in parallel blocks and folded into the running sums strictly in
//! ascending `j`, which makes every estimate, checkpoint and stopping point
//! independent of the worker count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::convergence::window_converged;
use super::{Game, Method, MetricGame, ShapleyVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{MetricKind, UtilityOracle};
use crate::model::TrainConfig;

/// Permitted drift between the summed marginals of one permutation and
/// `V(D) − V(∅)`.
pub const TELESCOPING_TOL: f64 = 1e-9;

/// Permutations evaluated per parallel block.
const BLOCK: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub max_permutations: u64,
    /// A trace snapshot is taken every this many permutations.
    pub checkpoint_every: u64,
    /// Number of trailing checkpoints inspected by the convergence test.
    pub convergence_window: usize,
    /// Relative to the current spread of estimates.
    pub convergence_tol: f64,
    pub seed: u64,
    /// Stop as soon as the convergence test passes. When false the monitor
    /// still records the first passing checkpoint but sampling continues to
    /// `max_permutations`.
    pub early_stop: bool,
}

impl SamplerConfig {
    /// Defaults for `n` players: `3n` permutations, a checkpoint after every
    /// permutation, a window of `n` checkpoints and a tolerance of 0.05.
    pub fn for_players(n: usize) -> Self {
        let n = n.max(1) as u64;
        SamplerConfig {
            max_permutations: 3 * n,
            checkpoint_every: 1,
            convergence_window: n as usize,
            convergence_tol: 0.05,
            seed: 0,
            early_stop: true,
        }
    }

    pub fn with_permutations(mut self, max_permutations: u64) -> Self {
        self.max_permutations = max_permutations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_early_stop(mut self, early_stop: bool) -> Self {
        self.early_stop = early_stop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSamplerConfig(msg));
        if self.max_permutations == 0 {
            return bad("max_permutations must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        if self.convergence_window == 0 {
            return bad("convergence_window must be positive".into());
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return bad("convergence_tol must be positive".into());
        }
        if self.early_stop && self.convergence_window as u64 >= self.max_permutations {
            return bad(format!(
                "convergence_window ({}) must be below max_permutations ({})",
                self.convergence_window, self.max_permutations
            ));
        }
        Ok(())
    }
}

/// Snapshot of running means after `permutations` permutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub permutations: u64,
    pub estimates: Vec<f64>,
}

/// Sampling outcome for one game output, indexed by player position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledValues {
    pub means: Vec<f64>,
    pub marginal_counts: Vec<u64>,
    pub trace: Vec<Checkpoint>,
    pub permutations: u64,
    /// First permutation count at which the convergence test passed.
    pub converged_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyRun {
    pub estimates: ShapleyVector,
    pub marginal_counts: Vec<u64>,
    pub trace: Vec<Checkpoint>,
    pub seed: u64,
    pub converged_at: Option<u64>,
}

impl ShapleyRun {
    pub fn permutations(&self) -> u64 {
        self.estimates.n_permutations
    }
}

/// The `j`-th sampled ordering of `n` player positions under `seed`.
pub fn permutation_for(seed: u64, j: u64, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Per-player marginals of one permutation, `[output][player]`.
fn walk<G: Game>(
    game: &G,
    order: &[usize],
    v_empty: &[f64],
    expected: &[f64],
    j: u64,
) -> Result<Vec<Vec<f64>>> {
    let outputs = game.outputs();
    let mut marginals = vec![vec![0.0; order.len()]; outputs];
    let mut prefix: Vec<usize> = Vec::with_capacity(order.len());
    let mut prev = v_empty.to_vec();
    let mut cur = vec![0.0; outputs];
    for &player in order {
        let at = prefix.partition_point(|&r| r < player);
        prefix.insert(at, player);
        game.values(&prefix, &mut cur)?;
        for o in 0..outputs {
            marginals[o][player] = cur[o] - prev[o];
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    for (o, m) in marginals.iter().enumerate() {
        let sum: f64 = m.iter().sum();
        if (sum - expected[o]).abs() > TELESCOPING_TOL {
            return Err(Error::Telescoping {
                permutation: j,
                sum,
                expected: expected[o],
            });
        }
    }
    Ok(marginals)
}

struct Accumulator {
    sums: Vec<f64>,
    count: u64,
    trace: Vec<Checkpoint>,
    converged_at: Option<u64>,
    stopped: bool,
}

impl Accumulator {
    fn means(&self) -> Vec<f64> {
        let k = self.count.max(1) as f64;
        self.sums.iter().map(|s| s / k).collect()
    }

    fn checkpoint(&mut self) {
        if self.trace.last().map(|c| c.permutations) != Some(self.count) {
            self.trace.push(Checkpoint {
                permutations: self.count,
                estimates: self.means(),
            });
        }
    }

    fn finish(self) -> SampledValues {
        let means = self.means();
        SampledValues {
            marginal_counts: vec![self.count; means.len()],
            means,
            trace: self.trace,
            permutations: self.count,
            converged_at: self.converged_at,
        }
    }
}

/// Runs the permutation sampler on every output of `game`.
///
/// All outputs see the same permutation stream. Each output stops
/// independently, so its result is identical to sampling that output alone.
pub fn sample_values<G: Game>(game: &G, sampler: &SamplerConfig) -> Result<Vec<SampledValues>> {
    sampler.validate()?;
    let n = game.players();
    let outputs = game.outputs();
    let mut v_empty = vec![0.0; outputs];
    game.values(&[], &mut v_empty)?;
    let mut v_full = vec![0.0; outputs];
    let all: Vec<usize> = (0..n).collect();
    game.values(&all, &mut v_full)?;
    let expected: Vec<f64> = v_full.iter().zip(&v_empty).map(|(f, e)| f - e).collect();

    let mut accs: Vec<Accumulator> = (0..outputs)
        .map(|_| Accumulator {
            sums: vec![0.0; n],
            count: 0,
            trace: Vec::new(),
            converged_at: None,
            stopped: false,
        })
        .collect();

    let mut next = 0u64;
    while next < sampler.max_permutations && accs.iter().any(|a| !a.stopped) {
        let end = (next + BLOCK).min(sampler.max_permutations);
        let block: Vec<Vec<Vec<f64>>> = (next..end)
            .into_par_iter()
            .map(|j| {
                let order = permutation_for(sampler.seed, j, n);
                walk(game, &order, &v_empty, &expected, j)
            })
            .collect::<Result<_>>()?;

        for marginals in block {
            for (acc, m) in accs.iter_mut().zip(marginals) {
                if acc.stopped {
                    continue;
                }
                for (s, x) in acc.sums.iter_mut().zip(&m) {
                    *s += x;
                }
                acc.count += 1;
                if acc.count % sampler.checkpoint_every == 0 {
                    acc.checkpoint();
                    if acc.converged_at.is_none()
                        && acc.count >= sampler.convergence_window as u64
                        && window_converged(&acc.trace, sampler)
                    {
                        acc.converged_at = Some(acc.count);
                        acc.stopped = sampler.early_stop;
                    }
                }
                if acc.count == sampler.max_permutations {
                    acc.stopped = true;
                }
            }
        }
        next = end;
    }

    Ok(accs
        .into_iter()
        .map(|mut acc| {
            acc.checkpoint();
            acc.finish()
        })
        .collect())
}

pub fn mc_shapley(
    train: &Dataset,
    test: &Dataset,
    kind: MetricKind,
    config: &TrainConfig,
    sampler: &SamplerConfig,
) -> Result<ShapleyRun> {
    Ok(mc_shapley_multi(train, test, &[kind], config, sampler)?.remove(0))
}

/// Monte Carlo values for several metrics over one shared permutation stream.
pub fn mc_shapley_multi(
    train: &Dataset,
    test: &Dataset,
    kinds: &[MetricKind],
    config: &TrainConfig,
    sampler: &SamplerConfig,
) -> Result<Vec<ShapleyRun>> {
    let oracle = UtilityOracle::new(train, test, config.clone())?;
    let game = MetricGame::new(&oracle, kinds);
    let sampled = sample_values(&game, sampler)?;
    Ok(kinds
        .iter()
        .zip(sampled)
        .map(|(&metric, s)| ShapleyRun {
            estimates: ShapleyVector {
                ids: train.ids().to_vec(),
                values: s.means,
                metric,
                method: Method::MonteCarlo,
                n_permutations: s.permutations,
            },
            marginal_counts: s.marginal_counts,
            trace: s.trace,
            seed: sampler.seed,
            converged_at: s.converged_at,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::exact_values;
    use crate::shapley::testing::{AdditiveGame, TableGame};

    fn fixed(n: usize, perms: u64) -> SamplerConfig {
        SamplerConfig::for_players(n)
            .with_permutations(perms)
            .with_early_stop(false)
    }

    #[test]
    fn permutations_are_seeded_bijections() {
        let a = permutation_for(7, 3, 10);
        assert_eq!(a, permutation_for(7, 3, 10));
        assert_ne!(a, permutation_for(7, 4, 10));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn single_permutation_telescopes() {
        let table: Vec<f64> = (0..16)
            .map(|m: usize| (m.count_ones() as f64).sqrt() / 2.0)
            .collect();
        let game = TableGame { n: 4, table };
        let out = sample_values(&game, &fixed(4, 1)).unwrap();
        let s = &out[0];
        assert_eq!(s.permutations, 1);
        let order = permutation_for(0, 0, 4);
        let first = order[0];
        assert_eq!(s.means[first], 0.5);
        assert!((s.means.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn additive_game_is_exact_after_any_number_of_permutations() {
        let w = vec![0.1, 0.2, -0.3];
        let s = &sample_values(&AdditiveGame(w.clone()), &fixed(3, 5)).unwrap()[0];
        for (a, b) in s.means.iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(s.marginal_counts, vec![5, 5, 5]);
        assert_eq!(s.trace.len(), 5);
        assert!(s
            .trace
            .windows(2)
            .all(|w| w[0].permutations < w[1].permutations));
    }

    #[test]
    fn converges_to_exact_on_table_game() {
        let table: Vec<f64> = (0..64usize)
            .map(|m| {
                let k = m.count_ones() as f64;
                (k * k) / 36.0
                    + if m & 0b1 != 0 && m & 0b10 != 0 {
                        0.2
                    } else {
                        0.0
                    }
            })
            .collect();
        let game = TableGame { n: 6, table };
        let exact = exact_values(&game, 16).unwrap();
        let mc = sample_values(&game, &fixed(6, 4000)).unwrap();
        for (a, b) in mc[0].means.iter().zip(&exact[0]) {
            assert!((a - b).abs() < 0.01, "{a} vs {b}");
        }
    }

    #[test]
    fn null_player_zero_under_sampling() {
        let table: Vec<f64> = (0..16usize)
            .map(|m| {
                if m & 0b0011 == 0b0011 {
                    1.0
                } else {
                    0.25 * (m & 1) as f64
                }
            })
            .collect();
        // players 2 and 3 never matter
        let game = TableGame { n: 4, table };
        let s = &sample_values(&game, &fixed(4, 50)).unwrap()[0];
        assert_eq!(s.means[2], 0.0);
        assert_eq!(s.means[3], 0.0);
    }

    #[test]
    fn early_stop_on_constant_game() {
        let game = AdditiveGame(vec![0.0; 5]);
        let cfg = SamplerConfig::for_players(5);
        let s = &sample_values(&game, &cfg).unwrap()[0];
        assert_eq!(s.converged_at, Some(5));
        assert_eq!(s.permutations, 5);
    }

    #[test]
    fn rejects_bad_configs() {
        let game = AdditiveGame(vec![0.0; 3]);
        let mut cfg = SamplerConfig::for_players(3);
        cfg.convergence_window = 9;
        assert!(sample_values(&game, &cfg).is_err());
        cfg.early_stop = false;
        assert!(sample_values(&game, &cfg).is_ok());
        cfg.convergence_tol = 0.0;
        assert!(sample_values(&game, &cfg).is_err());
    }

    /// Reports a different grand-coalition value after its first call.
    struct Drifting(std::sync::atomic::AtomicUsize);
    impl Game for Drifting {
        fn players(&self) -> usize {
            2
        }
        fn outputs(&self) -> usize {
            1
        }
        fn values(&self, rows: &[usize], out: &mut [f64]) -> Result<()> {
            out[0] = 0.0;
            if rows.len() == 2 {
                let calls = self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                out[0] = if calls == 0 { 1.0 } else { 0.5 };
            }
            Ok(())
        }
    }

    #[test]
    fn telescoping_violation_is_reported() {
        let game = Drifting(Default::default());
        let err = sample_values(&game, &fixed(2, 3)).unwrap_err();
        assert!(matches!(err, Error::Telescoping { permutation: 0, .. }));
    }
}
