//! Evaluation metrics and the coalition utility `V(S)`.

use std::fmt;
use std::str::FromStr;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::data::{Coalition, Dataset, Label};
use crate::error::{Error, Result};
use crate::model::{self, Model, TrainConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn actual_positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn actual_negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// The same predictions read with the class roles exchanged.
    pub fn swap_classes(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
            (Label::Positive, Label::Negative) => self.fp += 1,
            (Label::Negative, Label::Positive) => self.fn_ += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    Recall,
    Specificity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [
        MetricKind::Accuracy,
        MetricKind::Recall,
        MetricKind::Specificity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Recall => "recall",
            MetricKind::Specificity => "specificity",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => Ok(MetricKind::Accuracy),
            "recall" | "sensitivity" => Ok(MetricKind::Recall),
            "specificity" | "spec" => Ok(MetricKind::Specificity),
            other => Err(format!(
                "unknown metric {other:?} (expected accuracy, recall or specificity)"
            )),
        }
    }
}

/// A metric value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Score(f64);

impl Score {
    /// `None` unless `value` is finite and within `[0, 1]`.
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(Score(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn confusion(model: &Model, test: &Dataset) -> Result<ConfusionCounts> {
    if model.dim() != test.dim() {
        return Err(Error::FeatureDimension {
            expected: model.dim(),
            found: test.dim(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for p in test.iter() {
        counts.record(model.predict_unchecked(p.features), p.label);
    }
    Ok(counts)
}

pub fn score(counts: &ConfusionCounts, kind: MetricKind) -> Result<Score> {
    let (num, den) = match kind {
        MetricKind::Accuracy => (counts.tp + counts.tn, counts.total()),
        MetricKind::Recall => (counts.tp, counts.actual_positives()),
        MetricKind::Specificity => (counts.tn, counts.actual_negatives()),
    };
    if den == 0 {
        return Err(Error::ZeroDenominator {
            metric: kind.as_str(),
        });
    }
    Ok(Score(num as f64 / den as f64))
}

/// Rejects test sets that would leave recall or specificity undefined.
pub fn validate_test_set(test: &Dataset) -> Result<()> {
    let (positives, negatives) = test.class_counts();
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClassTestSet {
            positives,
            negatives,
        });
    }
    Ok(())
}

/// `V(S)`: test score of the model fitted on `train` (a materialized coalition).
pub fn utility(
    train: &Dataset,
    test: &Dataset,
    kind: MetricKind,
    config: &TrainConfig,
) -> Result<Score> {
    validate_test_set(test)?;
    let model = model::fit(train, config)?;
    score(&confusion(&model, test)?, kind)
}

/// Memoizing utility oracle over coalitions of one training set.
///
/// The cache stores confusion counts, which are metric independent, so one
/// fit serves every metric. Coalitions are keyed by a bitset over canonical
/// row positions and always fitted in canonical row order, so a cached value
/// is exactly what a fresh evaluation would produce.
pub struct UtilityOracle<'a> {
    train: &'a Dataset,
    test: &'a Dataset,
    config: TrainConfig,
    cache: DashMap<Vec<u64>, ConfusionCounts>,
    cache_capacity: usize,
}

impl<'a> UtilityOracle<'a> {
    pub const DEFAULT_CACHE_CAPACITY: usize = 1 << 20;

    pub fn new(train: &'a Dataset, test: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        validate_test_set(test)?;
        if train.dim() != test.dim() {
            return Err(Error::FeatureDimension {
                expected: train.dim(),
                found: test.dim(),
            });
        }
        Ok(UtilityOracle {
            train,
            test,
            config,
            cache: DashMap::new(),
            cache_capacity: Self::DEFAULT_CACHE_CAPACITY,
        })
    }

    pub fn with_cache_capacity(mut self, capacity: usize) -> Self {
        self.cache_capacity = capacity;
        self
    }

    pub fn train(&self) -> &Dataset {
        self.train
    }

    pub fn test(&self) -> &Dataset {
        self.test
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn cached_coalitions(&self) -> usize {
        self.cache.len()
    }

    /// Confusion counts for the coalition given by sorted row positions.
    pub fn counts_sorted_rows(&self, rows: &[usize]) -> Result<ConfusionCounts> {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]), "rows must be sorted");
        let key = bitset_key(rows, self.train.len());
        if let Some(hit) = self.cache.get(&key) {
            return Ok(*hit);
        }
        let model = model::fit_rows(self.train, rows, &self.config)?;
        let counts = confusion(&model, self.test)?;
        if self.cache.len() < self.cache_capacity {
            self.cache.insert(key, counts);
        }
        Ok(counts)
    }

    pub fn counts(&self, coalition: &Coalition) -> Result<ConfusionCounts> {
        let rows = coalition
            .ids()
            .iter()
            .map(|&id| self.train.index_of(id).ok_or(Error::UnknownId(id)))
            .collect::<Result<Vec<_>>>()?;
        self.counts_sorted_rows(&rows)
    }

    pub fn utility(&self, coalition: &Coalition, kind: MetricKind) -> Result<Score> {
        score(&self.counts(coalition)?, kind)
    }
}

fn bitset_key(rows: &[usize], n: usize) -> Vec<u64> {
    let mut words = vec![0u64; n.div_ceil(64).max(1)];
    for &r in rows {
        words[r / 64] |= 1 << (r % 64);
    }
    words
}
