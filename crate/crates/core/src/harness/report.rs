use serde::{Deserialize, Serialize};

use super::noise::{FlipDirection, FlipRecord};
use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::shapley::ShapleyVector;

/// Training ids ordered by ascending value; ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub ids: Vec<u64>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The `floor(fraction * N)` lowest-valued ids.
    pub fn bottom(&self, fraction: f64) -> &[u64] {
        let k = (fraction * self.ids.len() as f64).floor() as usize;
        &self.ids[..k.min(self.ids.len())]
    }
}

impl Ranking {
    /// Orders `(id, value)` pairs by value, then id.
    pub fn from_pairs(mut pairs: Vec<(u64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ranking {
            ids: pairs.into_iter().map(|(id, _)| id).collect(),
        }
    }
}

pub fn rank_by_value(sv: &ShapleyVector) -> Ranking {
    Ranking::from_pairs(sv.iter().collect())
}

/// Share of flipped ids found among the lowest-valued slice of the ranking.
///
/// A direction without flips reports a capture of 1.0 and sets its vacuous
/// flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub bottom_fraction: f64,
    pub bottom_size: usize,
    pub flips_pos_truth: usize,
    pub flips_neg_truth: usize,
    pub captured_pos_truth: f64,
    pub captured_neg_truth: f64,
    pub captured_total: f64,
    pub vacuous_pos_truth: bool,
    pub vacuous_neg_truth: bool,
    pub vacuous_total: bool,
}

impl DetectionReport {
    pub fn captured(&self, direction: FlipDirection) -> f64 {
        match direction {
            FlipDirection::PosToNeg => self.captured_pos_truth,
            FlipDirection::NegToPos => self.captured_neg_truth,
        }
    }

    pub fn flips(&self, direction: FlipDirection) -> usize {
        match direction {
            FlipDirection::PosToNeg => self.flips_pos_truth,
            FlipDirection::NegToPos => self.flips_neg_truth,
        }
    }

    pub fn vacuous(&self, direction: FlipDirection) -> bool {
        match direction {
            FlipDirection::PosToNeg => self.vacuous_pos_truth,
            FlipDirection::NegToPos => self.vacuous_neg_truth,
        }
    }
}

pub fn detection_report(
    ranking: &Ranking,
    record: &FlipRecord,
    bottom_fraction: f64,
) -> Result<DetectionReport> {
    if !(bottom_fraction > 0.0 && bottom_fraction <= 1.0) {
        return Err(Error::InvalidBottomFraction(bottom_fraction));
    }
    let bottom = ranking.bottom(bottom_fraction);
    let (mut hit_pos, mut hit_neg) = (0usize, 0usize);
    for id in bottom {
        match record.direction(*id) {
            Some(FlipDirection::PosToNeg) => hit_pos += 1,
            Some(FlipDirection::NegToPos) => hit_neg += 1,
            None => {}
        }
    }
    let flips_pos = record.count(FlipDirection::PosToNeg);
    let flips_neg = record.count(FlipDirection::NegToPos);
    let frac = |hit: usize, total: usize| {
        if total == 0 {
            1.0
        } else {
            hit as f64 / total as f64
        }
    };
    Ok(DetectionReport {
        bottom_fraction,
        bottom_size: bottom.len(),
        flips_pos_truth: flips_pos,
        flips_neg_truth: flips_neg,
        captured_pos_truth: frac(hit_pos, flips_pos),
        captured_neg_truth: frac(hit_neg, flips_neg),
        captured_total: frac(hit_pos + hit_neg, flips_pos + flips_neg),
        vacuous_pos_truth: flips_pos == 0,
        vacuous_neg_truth: flips_neg == 0,
        vacuous_total: flips_pos + flips_neg == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRow {
    pub rank: usize,
    pub id: u64,
    pub sv: f64,
    pub input_label: Label,
    pub ground_truth_label: Label,
}

/// One row per training point in rank order, pairing each value with its
/// input (possibly noisy) and ground-truth labels.
pub fn class_mapping_table(
    ranking: &Ranking,
    sv: &ShapleyVector,
    noisy: &Dataset,
    clean: &Dataset,
) -> Result<Vec<MappingRow>> {
    if noisy.ids() != clean.ids() {
        return Err(Error::IdMismatch(
            "noisy and clean datasets hold different ids".into(),
        ));
    }
    ranking
        .ids
        .iter()
        .enumerate()
        .map(|(rank, &id)| {
            let i = noisy.index_of(id).ok_or(Error::UnknownId(id))?;
            let value = sv.get(id).ok_or(Error::UnknownId(id))?;
            Ok(MappingRow {
                rank,
                id,
                sv: value,
                input_label: noisy.label(i),
                ground_truth_label: clean.label(i),
            })
        })
        .collect()
}

/// Mean value of the points carrying each input label, `(positive, negative)`.
/// `NaN` for a label with no points.
pub fn mean_value_by_label(sv: &ShapleyVector, labels_from: &Dataset) -> Result<(f64, f64)> {
    let (mut sum_pos, mut n_pos, mut sum_neg, mut n_neg) = (0.0, 0usize, 0.0, 0usize);
    for (id, value) in sv.iter() {
        let i = labels_from.index_of(id).ok_or(Error::UnknownId(id))?;
        if labels_from.label(i).is_positive() {
            sum_pos += value;
            n_pos += 1;
        } else {
            sum_neg += value;
            n_neg += 1;
        }
    }
    Ok((sum_pos / n_pos as f64, sum_neg / n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataPoint;
    use crate::metrics::MetricKind;
    use crate::shapley::Method;
    use proptest::prelude::*;

    fn sv(values: &[f64]) -> ShapleyVector {
        ShapleyVector {
            ids: (0..values.len() as u64).collect(),
            values: values.to_vec(),
            metric: MetricKind::Accuracy,
            method: Method::Exact,
            n_permutations: 0,
        }
    }

    fn record(entries: &[(u64, FlipDirection)]) -> FlipRecord {
        FlipRecord {
            flipped: entries.iter().copied().collect(),
        }
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_by_value(&sv(&[0.3, -0.1, 0.0])).ids, vec![1, 2, 0]);
        assert_eq!(rank_by_value(&sv(&[0.5; 4])).ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn capture_arithmetic() {
        // ten points, bottom 30% = ids ranked 0..3
        let ranking = Ranking {
            ids: (0..10).collect(),
        };
        let rec = record(&[
            (0, FlipDirection::PosToNeg),
            (2, FlipDirection::NegToPos),
            (7, FlipDirection::NegToPos),
        ]);
        let r = detection_report(&ranking, &rec, 0.3).unwrap();
        assert_eq!(r.bottom_size, 3);
        assert!((r.captured_total - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.captured_pos_truth, 1.0);
        assert_eq!(r.captured_neg_truth, 0.5);
        assert!(!r.vacuous_total);

        let all = detection_report(&ranking, &rec, 1.0).unwrap();
        assert_eq!(
            (
                all.captured_pos_truth,
                all.captured_neg_truth,
                all.captured_total
            ),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn empty_record_is_vacuous() {
        let ranking = Ranking { ids: vec![0, 1, 2] };
        let r = detection_report(&ranking, &FlipRecord::default(), 0.3).unwrap();
        assert_eq!(r.captured_total, 1.0);
        assert!(r.vacuous_total && r.vacuous_pos_truth && r.vacuous_neg_truth);
    }

    #[test]
    fn bottom_fraction_bounds() {
        let ranking = Ranking { ids: vec![0] };
        for bad in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(detection_report(&ranking, &FlipRecord::default(), bad).is_err());
        }
    }

    #[test]
    fn mapping_rows_follow_ranking() {
        let clean = Dataset::from_records(vec![
            DataPoint::new(0, vec![0.0], Label::Positive),
            DataPoint::new(1, vec![1.0], Label::Negative),
            DataPoint::new(2, vec![2.0], Label::Negative),
        ])
        .unwrap();
        let noisy = clean.with_labels(vec![Label::Negative, Label::Negative, Label::Negative]);
        let values = sv(&[0.2, 0.1, -0.4]);
        let ranking = rank_by_value(&values);
        let rows = class_mapping_table(&ranking, &values, &noisy, &clean).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.iter().map(|r| r.id).collect::<Vec<_>>(), vec![2, 1, 0]);
        let differing: Vec<u64> = rows
            .iter()
            .filter(|r| r.input_label != r.ground_truth_label)
            .map(|r| r.id)
            .collect();
        assert_eq!(differing, vec![0]);

        let other =
            Dataset::from_records(vec![DataPoint::new(9, vec![0.0], Label::Negative)]).unwrap();
        assert!(class_mapping_table(&ranking, &values, &noisy, &other).is_err());
    }

    proptest! {
        #[test]
        fn capture_is_monotone_in_fraction(
            values in proptest::collection::vec(-1.0f64..1.0, 5..40),
            flips in proptest::collection::vec(any::<(bool, bool)>(), 40),
            a in 0.01f64..1.0,
            b in 0.01f64..1.0,
        ) {
            let n = values.len();
            let rec = FlipRecord {
                flipped: flips[..n]
                    .iter()
                    .enumerate()
                    .filter(|(_, (f, _))| *f)
                    .map(|(i, (_, d))| (i as u64, if *d { FlipDirection::PosToNeg } else { FlipDirection::NegToPos }))
                    .collect(),
            };
            let ranking = rank_by_value(&sv(&values));
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let r_lo = detection_report(&ranking, &rec, lo).unwrap();
            let r_hi = detection_report(&ranking, &rec, hi).unwrap();
            prop_assert!(r_lo.captured_total <= r_hi.captured_total);
            prop_assert!(r_lo.captured_pos_truth <= r_hi.captured_pos_truth);
            prop_assert!(r_lo.captured_neg_truth <= r_hi.captured_neg_truth);
        }
    }
}
