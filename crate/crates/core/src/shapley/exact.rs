use rayon::prelude::*;

use super::{Game, Method, MetricGame, ShapleyVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{MetricKind, UtilityOracle};
use crate::model::TrainConfig;

/// Largest training set the exact engine accepts by default (2^16 fits).
pub const DEFAULT_EXACT_CAP: usize = 16;

/// Exact Shapley values of every output of `game` by full enumeration.
///
/// Every coalition is valued once (in parallel); the weighted marginal sums
/// are then accumulated sequentially in ascending bitmask order. Returns one
/// vector per output, indexed by player position.
pub fn exact_values<G: Game>(game: &G, cap: usize) -> Result<Vec<Vec<f64>>> {
    let n = game.players();
    if n > cap || n >= usize::BITS as usize - 1 {
        return Err(Error::TooManyPlayers { n, cap });
    }
    let outputs = game.outputs();
    let masks = 1usize << n;

    let table: Vec<Vec<f64>> = (0..masks)
        .into_par_iter()
        .map(|mask| {
            let rows: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            let mut out = vec![0.0; outputs];
            game.values(&rows, &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    // weight[s] = 1 / (n * C(n-1, s))
    let weight: Vec<f64> = (0..n.max(1))
        .map(|s| 1.0 / (n as f64 * binomial(n.saturating_sub(1), s)))
        .collect();

    let mut values = vec![vec![0.0; n]; outputs];
    for (o, per_output) in values.iter_mut().enumerate() {
        for (i, sv) in per_output.iter_mut().enumerate() {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for mask in (0..masks).filter(|m| m & bit == 0) {
                let size = mask.count_ones() as usize;
                acc += weight[size] * (table[mask | bit][o] - table[mask][o]);
            }
            *sv = acc;
        }
    }
    Ok(values)
}

pub fn exact_shapley(
    train: &Dataset,
    test: &Dataset,
    kind: MetricKind,
    config: &TrainConfig,
) -> Result<ShapleyVector> {
    Ok(exact_shapley_multi(train, test, &[kind], config)?.remove(0))
}

/// Exact values for several metrics sharing one enumeration of coalitions.
pub fn exact_shapley_multi(
    train: &Dataset,
    test: &Dataset,
    kinds: &[MetricKind],
    config: &TrainConfig,
) -> Result<Vec<ShapleyVector>> {
    if train.len() > DEFAULT_EXACT_CAP {
        return Err(Error::TooManyPlayers {
            n: train.len(),
            cap: DEFAULT_EXACT_CAP,
        });
    }
    let oracle = UtilityOracle::new(train, test, config.clone())?;
    let game = MetricGame::new(&oracle, kinds);
    let values = exact_values(&game, DEFAULT_EXACT_CAP)?;
    Ok(kinds
        .iter()
        .zip(values)
        .map(|(&metric, values)| ShapleyVector {
            ids: train.ids().to_vec(),
            values,
            metric,
            method: Method::Exact,
            n_permutations: 0,
        })
        .collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::testing::{AdditiveGame, TableGame};

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(15, 0), 1.0);
        assert_eq!(binomial(15, 15), 1.0);
        assert_eq!(binomial(10, 3), 120.0);
    }

    #[test]
    fn additive_game_recovers_weights() {
        let w = vec![0.5, -0.25, 0.125, 0.0];
        let sv = exact_values(&AdditiveGame(w.clone()), 16).unwrap();
        for (a, b) in sv[0].iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn glove_game() {
        // players 0 and 1 own left gloves, 2 owns the right glove; a pair is worth 1.
        let table: Vec<f64> = (0..8)
            .map(|m: usize| {
                let right = m & 0b100 != 0;
                let left = m & 0b011 != 0;
                if left && right {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let sv = exact_values(&TableGame { n: 3, table }, 16).unwrap();
        assert!((sv[0][0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((sv[0][1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((sv[0][2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn null_player_gets_zero() {
        // player 2 never changes the value
        let table: Vec<f64> = (0..8)
            .map(|m: usize| 0.3 * (m & 1) as f64 + 0.7 * ((m >> 1) & 1) as f64 + 0.1)
            .collect();
        let sv = exact_values(&TableGame { n: 3, table }, 16).unwrap();
        assert_eq!(sv[0][2], 0.0);
    }

    #[test]
    fn cap_enforced() {
        let err = exact_values(&AdditiveGame(vec![0.0; 5]), 4).unwrap_err();
        assert!(matches!(err, Error::TooManyPlayers { n: 5, cap: 4 }));
    }

    #[test]
    fn single_player_gets_everything() {
        let sv = exact_values(
            &TableGame {
                n: 1,
                table: vec![0.2, 0.9],
            },
            16,
        )
        .unwrap();
        assert!((sv[0][0] - 0.7).abs() < 1e-15);
    }
}
