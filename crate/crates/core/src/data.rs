//! Datasets, labels, coalitions and permutations.
//!
//! A [`Dataset`] is the player set of the valuation game. Points carry
//! caller-supplied ids and are stored sorted by id, so every downstream
//! computation walks them in the same order regardless of how the records
//! arrived.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label. `Positive` is the designated minority class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// Short form used in CSV files.
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Negative => "neg",
            Label::Positive => "pos",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "pos" | "positive" | "1" => Ok(Label::Positive),
            "neg" | "negative" | "0" => Ok(Label::Negative),
            other => Err(format!("unknown label {other:?} (expected pos or neg)")),
        }
    }
}

/// An owned training or test record.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: Label,
}

impl DataPoint {
    pub fn new(id: u64, features: Vec<f64>, label: Label) -> Self {
        DataPoint {
            id,
            features,
            label,
        }
    }
}

/// Borrowed view of one point inside a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRef<'a> {
    pub id: u64,
    pub features: &'a [f64],
    pub label: Label,
}

/// An immutable, id-sorted collection of points sharing one feature dimension.
///
/// Features are kept in a single row-major buffer so the trainer can walk
/// them without chasing pointers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<u64>,
    labels: Vec<Label>,
    features: Vec<f64>,
    dim: usize,
}

impl Dataset {
    /// Builds a canonical dataset. Rejects the whole input on the first
    /// offending record; `index` in the error refers to the input position.
    pub fn from_records(records: Vec<DataPoint>) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::EmptyDataset);
        };
        let dim = first.features.len();
        let mut seen = HashSet::with_capacity(records.len());
        for (index, rec) in records.iter().enumerate() {
            if rec.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    index,
                    id: rec.id,
                    expected: dim,
                    found: rec.features.len(),
                });
            }
            if let Some((feature, &value)) = rec
                .features
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite())
            {
                return Err(Error::NonFiniteFeature {
                    index,
                    id: rec.id,
                    feature,
                    value,
                });
            }
            if !seen.insert(rec.id) {
                return Err(Error::DuplicateId { index, id: rec.id });
            }
        }

        let mut records = records;
        records.sort_by_key(|r| r.id);
        let mut ds = Dataset::empty(dim);
        ds.ids.reserve(records.len());
        ds.labels.reserve(records.len());
        ds.features.reserve(records.len() * dim);
        for rec in records {
            ds.ids.push(rec.id);
            ds.labels.push(rec.label);
            ds.features.extend_from_slice(&rec.features);
        }
        Ok(ds)
    }

    /// The empty coalition's training set.
    pub fn empty(dim: usize) -> Self {
        Dataset {
            ids: Vec::new(),
            labels: Vec::new(),
            features: Vec::new(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Ids in canonical (ascending) order.
    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Row-major feature buffer, `len() * dim()` values.
    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    pub fn features(&self, index: usize) -> &[f64] {
        &self.features[index * self.dim..(index + 1) * self.dim]
    }

    pub fn label(&self, index: usize) -> Label {
        self.labels[index]
    }

    pub fn get(&self, index: usize) -> PointRef<'_> {
        PointRef {
            id: self.ids[index],
            features: self.features(index),
            label: self.labels[index],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = PointRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Position of `id` in canonical order.
    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index_of(id).is_some()
    }

    pub fn records(&self) -> Vec<DataPoint> {
        self.iter()
            .map(|p| DataPoint::new(p.id, p.features.to_vec(), p.label))
            .collect()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|l| l.is_positive()).count();
        (pos, self.len() - pos)
    }

    /// Same points with replaced labels (aligned to canonical order).
    pub fn with_labels(&self, labels: Vec<Label>) -> Self {
        assert_eq!(labels.len(), self.len(), "label vector length");
        Dataset {
            labels,
            ..self.clone()
        }
    }

    /// Materializes a coalition as its own dataset.
    pub fn subset(&self, coalition: &Coalition) -> Result<Self> {
        let mut out = Dataset::empty(self.dim);
        for &id in coalition.ids() {
            let i = self.index_of(id).ok_or(Error::UnknownId(id))?;
            out.ids.push(id);
            out.labels.push(self.labels[i]);
            out.features.extend_from_slice(self.features(i));
        }
        Ok(out)
    }

    pub fn full_coalition(&self) -> Coalition {
        Coalition {
            ids: self.ids.clone(),
        }
    }
}

/// A subset of a dataset's ids, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Coalition {
    ids: Vec<u64>,
}

impl Coalition {
    pub fn new(ids: impl IntoIterator<Item = u64>) -> Self {
        let mut ids: Vec<u64> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Coalition { ids }
    }

    pub fn empty() -> Self {
        Coalition::default()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub fn with(&self, id: u64) -> Self {
        let mut ids = self.ids.clone();
        if let Err(pos) = ids.binary_search(&id) {
            ids.insert(pos, id);
        }
        Coalition { ids }
    }
}

/// An ordering of every id of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<u64>,
}

impl Permutation {
    /// Validates that `order` lists each id of `dataset` exactly once.
    pub fn new(order: Vec<u64>, dataset: &Dataset) -> Result<Self> {
        if order.len() != dataset.len() {
            return Err(Error::IdMismatch(format!(
                "permutation has {} entries, dataset has {}",
                order.len(),
                dataset.len()
            )));
        }
        let mut seen = vec![false; dataset.len()];
        for &id in &order {
            let i = dataset.index_of(id).ok_or(Error::UnknownId(id))?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::IdMismatch(format!(
                    "id {id} repeated in permutation"
                )));
            }
        }
        Ok(Permutation { order })
    }

    pub fn identity(dataset: &Dataset) -> Self {
        Permutation {
            order: dataset.ids().to_vec(),
        }
    }

    pub fn order(&self) -> &[u64] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.order.iter().position(|&x| x == id)
    }
}

/// The ids strictly preceding `id` in `perm`.
pub fn prefix_coalition(perm: &Permutation, id: u64) -> Result<Coalition> {
    let pos = perm.position(id).ok_or(Error::UnknownId(id))?;
    Ok(Coalition::new(perm.order[..pos].iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: u64, f: &[f64], label: Label) -> DataPoint {
        DataPoint::new(id, f.to_vec(), label)
    }

    #[test]
    fn builds_canonical_dataset() {
        let ds = Dataset::from_records(vec![
            rec(1, &[2.0], Label::Negative),
            rec(0, &[1.0], Label::Positive),
        ])
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 1);
        assert_eq!(ds.ids(), &[0, 1]);
        assert_eq!(ds.features(0), &[1.0]);
        assert_eq!(ds.label(1), Label::Negative);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Dataset::from_records(vec![
            rec(1, &[0.0], Label::Negative),
            rec(1, &[1.0], Label::Positive),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId { index: 1, id: 1 }));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let err = Dataset::from_records(vec![
            rec(0, &[0.0, 1.0], Label::Negative),
            rec(1, &[1.0, 2.0, 3.0], Label::Positive),
        ])
        .unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                index: 1,
                expected: 2,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let err = Dataset::from_records(vec![rec(7, &[f64::NAN], Label::Negative)]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFeature { id: 7, .. }));
        assert!(matches!(
            Dataset::from_records(vec![]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn prefix_examples() {
        let ds = Dataset::from_records(
            (0..3)
                .map(|i| rec(i, &[i as f64], Label::Negative))
                .collect(),
        )
        .unwrap();
        let perm = Permutation::new(vec![2, 0, 1], &ds).unwrap();
        assert!(prefix_coalition(&perm, 2).unwrap().is_empty());
        assert_eq!(prefix_coalition(&perm, 1).unwrap(), Coalition::new([2, 0]));
        assert_eq!(prefix_coalition(&perm, 0).unwrap(), Coalition::new([2]));
        assert!(matches!(
            prefix_coalition(&perm, 9),
            Err(Error::UnknownId(9))
        ));
    }

    #[test]
    fn permutation_must_be_bijection() {
        let ds = Dataset::from_records((0..3).map(|i| rec(i, &[0.0], Label::Negative)).collect())
            .unwrap();
        assert!(Permutation::new(vec![0, 0, 1], &ds).is_err());
        assert!(Permutation::new(vec![0, 1], &ds).is_err());
        assert!(Permutation::new(vec![0, 1, 5], &ds).is_err());
    }

    #[test]
    fn subset_rejects_foreign_ids() {
        let ds = Dataset::from_records(vec![rec(3, &[0.0], Label::Negative)]).unwrap();
        assert!(ds.subset(&Coalition::new([4])).is_err());
        assert_eq!(ds.subset(&Coalition::empty()).unwrap().len(), 0);
    }

    proptest! {
        #[test]
        fn prefix_sizes_match_positions(order in Just((0u64..12).collect::<Vec<_>>()).prop_shuffle()) {
            let ds = Dataset::from_records(
                (0..12).map(|i| rec(i, &[i as f64], Label::Negative)).collect(),
            ).unwrap();
            let perm = Permutation::new(order.clone(), &ds).unwrap();
            let mut running = Coalition::empty();
            for (pos, &id) in order.iter().enumerate() {
                let prefix = prefix_coalition(&perm, id).unwrap();
                prop_assert_eq!(prefix.len(), pos);
                prop_assert_eq!(&prefix, &running);
                running = running.with(id);
            }
            prop_assert_eq!(running, ds.full_coalition());
        }

        #[test]
        fn construction_is_idempotent(
            rows in proptest::collection::vec((proptest::collection::vec(-1e6f64..1e6, 3), any::<bool>()), 1..20),
            shuffle_seed in any::<u64>(),
        ) {
            let mut records: Vec<DataPoint> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (f, p))| rec(i as u64 * 3 + (shuffle_seed % 3), &f, if p { Label::Positive } else { Label::Negative }))
                .collect();
            records.reverse();
            let ds = Dataset::from_records(records).unwrap();
            let again = Dataset::from_records(ds.records()).unwrap();
            prop_assert_eq!(ds, again);
        }
    }
}
