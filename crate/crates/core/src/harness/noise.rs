use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};

/// Per-class label noise: the fraction of each class whose labels get flipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level_positive: f64,
    pub level_negative: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn symmetric(level: f64, seed: u64) -> Self {
        NoiseSpec {
            level_positive: level,
            level_negative: level,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, level) in [
            ("level_positive", self.level_positive),
            ("level_negative", self.level_negative),
        ] {
            if !(0.0..1.0).contains(&level) {
                return Err(Error::InvalidNoise(format!(
                    "{name} must lie in [0, 1), got {level}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipDirection {
    /// Ground truth positive, input label negative.
    PosToNeg,
    /// Ground truth negative, input label positive.
    NegToPos,
}

impl FlipDirection {
    pub fn from_truth(truth: Label) -> Self {
        match truth {
            Label::Positive => FlipDirection::PosToNeg,
            Label::Negative => FlipDirection::NegToPos,
        }
    }

    pub fn truth(self) -> Label {
        match self {
            FlipDirection::PosToNeg => Label::Positive,
            FlipDirection::NegToPos => Label::Negative,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            FlipDirection::PosToNeg => FlipDirection::NegToPos,
            FlipDirection::NegToPos => FlipDirection::PosToNeg,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlipDirection::PosToNeg => "pos_to_neg",
            FlipDirection::NegToPos => "neg_to_pos",
        }
    }
}

impl fmt::Display for FlipDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FlipDirection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "pos_to_neg" => Ok(FlipDirection::PosToNeg),
            "neg_to_pos" => Ok(FlipDirection::NegToPos),
            other => Err(format!("unknown flip direction {other:?}")),
        }
    }
}

/// Which ids had their labels flipped, keyed by id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlipRecord {
    pub flipped: BTreeMap<u64, FlipDirection>,
}

impl FlipRecord {
    pub fn len(&self) -> usize {
        self.flipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flipped.is_empty()
    }

    pub fn count(&self, direction: FlipDirection) -> usize {
        self.flipped.values().filter(|&&d| d == direction).count()
    }

    pub fn direction(&self, id: u64) -> Option<FlipDirection> {
        self.flipped.get(&id).copied()
    }

    /// The record that undoes this one when applied to the noisy dataset.
    pub fn reversed(&self) -> Self {
        FlipRecord {
            flipped: self
                .flipped
                .iter()
                .map(|(&id, d)| (id, d.reversed()))
                .collect(),
        }
    }
}

/// Flips `floor(level * class_count)` labels in each class, drawn uniformly
/// without replacement. Features are untouched.
pub fn inject_noise(clean: &Dataset, spec: &NoiseSpec) -> Result<(Dataset, FlipRecord)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut record = FlipRecord::default();
    for (label, level) in [
        (Label::Positive, spec.level_positive),
        (Label::Negative, spec.level_negative),
    ] {
        let members: Vec<usize> = (0..clean.len())
            .filter(|&i| clean.label(i) == label)
            .collect();
        let amount = (level * members.len() as f64).floor() as usize;
        let mut chosen = index::sample(&mut rng, members.len(), amount).into_vec();
        chosen.sort_unstable();
        for c in chosen {
            record
                .flipped
                .insert(clean.ids()[members[c]], FlipDirection::from_truth(label));
        }
    }
    let noisy = apply_flips(clean, &record)?;
    Ok((noisy, record))
}

/// Applies `record` to `dataset`, checking each flip starts from the
/// label its direction implies.
pub fn apply_flips(dataset: &Dataset, record: &FlipRecord) -> Result<Dataset> {
    let mut labels = dataset.labels().to_vec();
    for (&id, &direction) in &record.flipped {
        let i = dataset.index_of(id).ok_or(Error::UnknownId(id))?;
        if labels[i] != direction.truth() {
            return Err(Error::IdMismatch(format!(
                "id {id} is labelled {} but the record flips it {direction}",
                labels[i]
            )));
        }
        labels[i] = labels[i].flipped();
    }
    Ok(dataset.with_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataPoint;

    fn balanced(n_pos: usize, n_neg: usize) -> Dataset {
        Dataset::from_records(
            (0..n_pos + n_neg)
                .map(|i| {
                    let label = if i < n_pos {
                        Label::Positive
                    } else {
                        Label::Negative
                    };
                    DataPoint::new(i as u64, vec![i as f64, -(i as f64)], label)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let clean = balanced(10, 40);
        let (noisy, record) = inject_noise(&clean, &NoiseSpec::symmetric(0.0, 1)).unwrap();
        assert_eq!(noisy, clean);
        assert!(record.is_empty());
    }

    #[test]
    fn flip_counts_follow_the_experiment_protocol() {
        let clean = balanced(100, 400);
        for (level, pos, neg) in [(0.1, 10, 40), (0.2, 20, 80), (0.3, 30, 120)] {
            let (noisy, record) = inject_noise(&clean, &NoiseSpec::symmetric(level, 9)).unwrap();
            assert_eq!(record.count(FlipDirection::PosToNeg), pos);
            assert_eq!(record.count(FlipDirection::NegToPos), neg);
            for i in 0..clean.len() {
                let id = clean.ids()[i];
                assert_eq!(noisy.features(i), clean.features(i));
                assert_eq!(
                    noisy.label(i) != clean.label(i),
                    record.direction(id).is_some()
                );
            }
        }
    }

    #[test]
    fn reversed_record_restores_clean() {
        let clean = balanced(20, 80);
        let (noisy, record) = inject_noise(&clean, &NoiseSpec::symmetric(0.3, 4)).unwrap();
        assert_eq!(apply_flips(&noisy, &record.reversed()).unwrap(), clean);
        // applying the forward record twice is rejected
        assert!(apply_flips(&noisy, &record).is_err());
    }

    #[test]
    fn seeds_change_the_selection() {
        let clean = balanced(20, 80);
        let a = inject_noise(&clean, &NoiseSpec::symmetric(0.2, 1))
            .unwrap()
            .1;
        let b = inject_noise(&clean, &NoiseSpec::symmetric(0.2, 2))
            .unwrap()
            .1;
        assert_ne!(a, b);
        assert_eq!(
            a,
            inject_noise(&clean, &NoiseSpec::symmetric(0.2, 1))
                .unwrap()
                .1
        );
    }

    #[test]
    fn rejects_full_noise() {
        let clean = balanced(2, 2);
        assert!(inject_noise(&clean, &NoiseSpec::symmetric(1.0, 0)).is_err());
        assert!(inject_noise(&clean, &NoiseSpec::symmetric(-0.1, 0)).is_err());
    }
}
