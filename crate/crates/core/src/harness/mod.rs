//! Label-noise experiments: synthetic embeddings, per-class label flipping,
//! value rankings and detection reports.

mod noise;
mod report;
mod synth;

pub use noise::{apply_flips, inject_noise, FlipDirection, FlipRecord, NoiseSpec};
pub use report::{
    class_mapping_table, detection_report, mean_value_by_label, rank_by_value, DetectionReport,
    MappingRow, Ranking,
};
pub use synth::{synth_gaussian, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::metrics::MetricKind;
use crate::model::TrainConfig;
use crate::shapley::{
    exact_shapley_multi, mc_shapley_multi, SamplerConfig, ShapleyRun, ShapleyVector,
};

/// Bottom fraction every experiment reports in addition to its noise level.
pub const COMMON_BOTTOM_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub noise: NoiseSpec,
    pub metrics: Vec<MetricKind>,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    /// Use the exact engine instead of permutation sampling.
    pub exact: bool,
    /// Extra bottom fractions reported alongside the noise level itself.
    pub bottom_fractions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricOutcome {
    pub values: ShapleyVector,
    pub run: Option<ShapleyRun>,
    pub ranking: Ranking,
    pub reports: Vec<DetectionReport>,
    pub mapping: Vec<MappingRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub noisy: Dataset,
    pub record: FlipRecord,
    pub per_metric: Vec<MetricOutcome>,
}

impl ExperimentConfig {
    /// Noise level fraction (if positive) followed by the extra fractions,
    /// without duplicates.
    pub fn report_fractions(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let level = self.noise.level_positive.max(self.noise.level_negative);
        if level > 0.0 {
            out.push(level);
        }
        for &f in &self.bottom_fractions {
            if !out.contains(&f) {
                out.push(f);
            }
        }
        out
    }
}

/// Injects noise into `clean`, values the noisy training set under every
/// metric (one shared permutation stream) and reports detection rates.
pub fn run_noise_experiment(
    clean: &Dataset,
    test: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let (noisy, record) = inject_noise(clean, &cfg.noise)?;
    let (vectors, runs): (Vec<ShapleyVector>, Vec<Option<ShapleyRun>>) = if cfg.exact {
        exact_shapley_multi(&noisy, test, &cfg.metrics, &cfg.train)?
            .into_iter()
            .map(|v| (v, None))
            .unzip()
    } else {
        mc_shapley_multi(&noisy, test, &cfg.metrics, &cfg.train, &cfg.sampler)?
            .into_iter()
            .map(|r| (r.estimates.clone(), Some(r)))
            .unzip()
    };

    let fractions = cfg.report_fractions();
    let per_metric = vectors
        .into_iter()
        .zip(runs)
        .map(|(values, run)| {
            let ranking = rank_by_value(&values);
            let reports = fractions
                .iter()
                .map(|&f| detection_report(&ranking, &record, f))
                .collect::<Result<Vec<_>>>()?;
            let mapping = class_mapping_table(&ranking, &values, &noisy, clean)?;
            Ok(MetricOutcome {
                values,
                run,
                ranking,
                reports,
                mapping,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentOutcome {
        noisy,
        record,
        per_metric,
    })
}

/// Upper-case Roman numeral used to name experiment directories.
pub fn roman(mut n: usize) -> String {
    const TABLE: [(usize, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for &(value, glyph) in &TABLE {
        while n >= value {
            out.push_str(glyph);
            n -= value;
        }
    }
    out
}
