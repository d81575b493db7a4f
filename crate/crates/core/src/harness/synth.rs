use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DataPoint, Dataset, Label};
use crate::error::{Error, Result};

/// Two isotropic unit-variance Gaussian clouds in `dim` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_positive: usize,
    pub n_negative: usize,
    pub dim: usize,
    /// Distance between the class means in standard deviations.
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_positive: 100,
            n_negative: 400,
            dim: 16,
            class_separation: 4.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_positive == 0 || self.n_negative == 0 {
            return Err(Error::Usage("both class counts must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::Usage("dim must be positive".into()));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::Usage("class_separation must be non-negative".into()));
        }
        Ok(())
    }
}

/// Draws a training set with the configured class counts and an independent
/// test set twice its size.
///
/// Class means sit at `±separation/2` along the unit diagonal. Ids are
/// `0..n` with classes assigned to ids in shuffled order.
pub fn synth_gaussian(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let train = draw(cfg, cfg.n_positive, cfg.n_negative, 0)?;
    let test = draw(cfg, 2 * cfg.n_positive, 2 * cfg.n_negative, 1)?;
    Ok((train, test))
}

fn draw(cfg: &SynthConfig, n_pos: usize, n_neg: usize, stream: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Positive, n_pos)
        .chain(std::iter::repeat_n(Label::Negative, n_neg))
        .collect();
    labels.shuffle(&mut rng);

    let offset = 0.5 * cfg.class_separation / (cfg.dim as f64).sqrt();
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(id, label)| {
            let shift = if label.is_positive() { offset } else { -offset };
            let features = (0..cfg.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + shift
                })
                .collect();
            DataPoint::new(id as u64, features, label)
        })
        .collect();
    Dataset::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_sizes() {
        let (train, test) = synth_gaussian(&SynthConfig::default()).unwrap();
        assert_eq!(train.class_counts(), (100, 400));
        assert_eq!(test.class_counts(), (200, 800));
        assert_eq!(train.dim(), 16);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_positive: 5,
            n_negative: 20,
            ..SynthConfig::default()
        };
        assert_eq!(synth_gaussian(&cfg).unwrap(), synth_gaussian(&cfg).unwrap());
        let other = SynthConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(
            synth_gaussian(&cfg).unwrap().0,
            synth_gaussian(&other).unwrap().0
        );
    }

    #[test]
    fn class_means_are_separated() {
        let cfg = SynthConfig {
            n_positive: 400,
            n_negative: 400,
            dim: 4,
            class_separation: 2.0,
            seed: 3,
        };
        let (train, _) = synth_gaussian(&cfg).unwrap();
        let u = 1.0 / 2.0; // unit diagonal component for dim 4
        let proj = |label| {
            let (sum, n) = train
                .iter()
                .filter(|p| p.label == label)
                .fold((0.0, 0), |(s, n), p| {
                    (s + p.features.iter().sum::<f64>() * u, n + 1)
                });
            sum / n as f64
        };
        let gap = proj(Label::Positive) - proj(Label::Negative);
        assert!((gap - 2.0).abs() < 0.2, "gap {gap}");
    }

    #[test]
    fn rejects_empty_class() {
        let cfg = SynthConfig {
            n_positive: 0,
            ..SynthConfig::default()
        };
        assert!(synth_gaussian(&cfg).is_err());
    }
}
