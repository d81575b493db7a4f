//! CSV and manifest formats.
//!
//! Dataset files have the header `id,label,f0,...,f{d-1}` with labels `pos` /
//! `neg`. Every real number is written with 17 significant digits so files
//! round-trip bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DataPoint, Dataset, Label};
use crate::error::{Error, Result};
use crate::harness::{DetectionReport, FlipDirection, FlipRecord, MappingRow, SynthConfig};
use crate::metrics::MetricKind;
use crate::model::TrainConfig;
use crate::shapley::{Checkpoint, Method, SamplerConfig, ShapleyVector};

/// Lossless decimal rendering of an `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path, err: csv::Error) -> Error {
    match err.kind() {
        csv::ErrorKind::Io(_) => match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::io(path, e),
            _ => unreachable!(),
        },
        _ => Error::Parse {
            path: path.display().to_string(),
            line: err.position().map_or(0, |p| p.line()),
            message: err.to_string(),
        },
    }
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut header = strings(&["id", "label"]);
    header.extend((0..data.dim()).map(|j| format!("f{j}")));
    write_rows(
        path,
        &header,
        data.iter().map(|p| {
            [p.id.to_string(), p.label.to_string()]
                .into_iter()
                .chain(p.features.iter().map(|&x| fmt_f64(x)))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file, path)
}

/// Parses dataset CSV from any reader; `origin` names it in diagnostics.
pub fn parse_dataset<R: Read>(reader: R, origin: &Path) -> Result<Dataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.display().to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(origin, e))?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(parse_err(1, "header must be id,label,f0,...".to_string()));
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{j}") {
            return Err(parse_err(
                1,
                format!("column {} should be f{j}, found {name:?}", j + 3),
            ));
        }
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(origin, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let id: u64 = row[0]
            .parse()
            .map_err(|e| parse_err(line, format!("column 1 (id): {e}")))?;
        let label: Label = row[1]
            .parse()
            .map_err(|e| parse_err(line, format!("column 2 (label): {e}")))?;
        let features = row
            .iter()
            .enumerate()
            .skip(2)
            .map(|(c, s)| {
                s.parse::<f64>()
                    .map_err(|e| parse_err(line, format!("column {} ({s:?}): {e}", c + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(DataPoint::new(id, features, label));
    }
    Dataset::from_records(records).map_err(|e| match e {
        Error::EmptyDataset => parse_err(1, "no data rows".to_string()),
        // a data record at index i sits on line i + 2
        Error::DuplicateId { index, .. }
        | Error::DimensionMismatch { index, .. }
        | Error::NonFiniteFeature { index, .. } => parse_err(index as u64 + 2, e.to_string()),
        other => other,
    })
}

/// `id,sv,input_label` in id order.
pub fn write_sv_table(path: &Path, sv: &ShapleyVector, labels_from: &Dataset) -> Result<()> {
    let rows = sv
        .iter()
        .map(|(id, value)| {
            let label = labels_from
                .index_of(id)
                .map(|i| labels_from.label(i))
                .ok_or(Error::UnknownId(id))?;
            Ok(vec![id.to_string(), fmt_f64(value), label.to_string()])
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &strings(&["id", "sv", "input_label"]), rows)
}

/// Reads `(id, value)` pairs from an SV table.
pub fn read_sv_pairs(path: &Path) -> Result<Vec<(u64, f64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message: m,
        };
        let id = row
            .get(0)
            .ok_or_else(|| bad("missing id".into()))?
            .parse()
            .map_err(|e| bad(format!("id: {e}")))?;
        let value = row
            .get(1)
            .ok_or_else(|| bad("missing sv".into()))?
            .parse()
            .map_err(|e| bad(format!("sv: {e}")))?;
        out.push((id, value));
    }
    Ok(out)
}

/// `permutation_count,id_<a>,id_<b>,...` for the tracked ids.
pub fn write_trace(path: &Path, trace: &[Checkpoint], ids: &[u64], tracked: &[u64]) -> Result<()> {
    let positions = tracked
        .iter()
        .map(|&t| ids.binary_search(&t).map_err(|_| Error::UnknownId(t)))
        .collect::<Result<Vec<_>>>()?;
    let mut header = strings(&["permutation_count"]);
    header.extend(tracked.iter().map(|id| format!("id_{id}")));
    write_rows(
        path,
        &header,
        trace.iter().map(|c| {
            std::iter::once(c.permutations.to_string())
                .chain(positions.iter().map(|&p| fmt_f64(c.estimates[p])))
                .collect::<Vec<_>>()
        }),
    )
}

pub fn write_flips(path: &Path, record: &FlipRecord) -> Result<()> {
    write_rows(
        path,
        &strings(&["id", "direction"]),
        record
            .flipped
            .iter()
            .map(|(id, d)| vec![id.to_string(), d.to_string()]),
    )
}

pub fn read_flips(path: &Path) -> Result<FlipRecord> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut record = FlipRecord::default();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message: m,
        };
        let id: u64 = row
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|e| bad(format!("id: {e}")))?;
        let dir: FlipDirection = row.get(1).unwrap_or_default().parse().map_err(bad)?;
        record.flipped.insert(id, dir);
    }
    Ok(record)
}

pub fn write_mapping(path: &Path, rows: &[MappingRow]) -> Result<()> {
    write_rows(
        path,
        &strings(&["rank", "id", "sv", "input_label", "ground_truth_label"]),
        rows.iter().map(|r| {
            vec![
                r.rank.to_string(),
                r.id.to_string(),
                fmt_f64(r.sv),
                r.input_label.to_string(),
                r.ground_truth_label.to_string(),
            ]
        }),
    )
}

pub const DETECTION_HEADER: [&str; 7] = [
    "metric",
    "bottom_fraction",
    "bottom_size",
    "direction",
    "flips",
    "captured",
    "vacuous",
];

/// Three rows per report: `pos_to_neg`, `neg_to_pos`, `total`.
pub fn detection_rows(metric: Option<MetricKind>, report: &DetectionReport) -> Vec<Vec<String>> {
    let metric = metric.map_or("-".to_string(), |m| m.to_string());
    let mut rows: Vec<Vec<String>> = [FlipDirection::PosToNeg, FlipDirection::NegToPos]
        .into_iter()
        .map(|d| {
            vec![
                metric.clone(),
                report.bottom_fraction.to_string(),
                report.bottom_size.to_string(),
                d.to_string(),
                report.flips(d).to_string(),
                fmt_f64(report.captured(d)),
                report.vacuous(d).to_string(),
            ]
        })
        .collect();
    rows.push(vec![
        metric,
        report.bottom_fraction.to_string(),
        report.bottom_size.to_string(),
        "total".to_string(),
        (report.flips_pos_truth + report.flips_neg_truth).to_string(),
        fmt_f64(report.captured_total),
        report.vacuous_total.to_string(),
    ]);
    rows
}

pub fn write_detection(
    path: &Path,
    metric: Option<MetricKind>,
    reports: &[DetectionReport],
) -> Result<()> {
    write_rows(
        path,
        &strings(&DETECTION_HEADER),
        reports.iter().flat_map(|r| detection_rows(metric, r)),
    )
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn describe(path: &Path) -> Result<Self> {
        Ok(InputFile {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

/// How one metric's values were produced. Informational; ignored on re-runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub metric: MetricKind,
    pub method: Method,
    pub n_permutations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged_at: Option<u64>,
}

impl ValueSummary {
    pub fn new(sv: &ShapleyVector, converged_at: Option<u64>) -> Self {
        ValueSummary {
            metric: sv.metric,
            method: sv.method,
            n_permutations: sv.n_permutations,
            converged_at,
        }
    }
}

/// Everything needed to reproduce a run. Serialized as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<InputFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<InputFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub tracked_ids: Vec<u64>,
    #[serde(default)]
    pub noise_levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    #[serde(default)]
    pub bottom_fractions: Vec<f64>,
    #[serde(default)]
    pub results: Vec<ValueSummary>,
    pub threads: usize,
    #[serde(default)]
    pub wall_clock: WallClock,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            train: None,
            test: None,
            synth: None,
            train_config: None,
            sampler: None,
            exact: false,
            metrics: Vec::new(),
            tracked_ids: Vec::new(),
            noise_levels: Vec::new(),
            noise_seed: None,
            bottom_fractions: Vec::new(),
            results: Vec::new(),
            threads: 0,
            wall_clock: WallClock::default(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{synth_gaussian, SynthConfig};
    use proptest::prelude::*;

    #[test]
    fn dataset_round_trip_is_exact() {
        let (train, _) = synth_gaussian(&SynthConfig {
            n_positive: 3,
            n_negative: 7,
            dim: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_dataset(&path, &train).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), train);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,label,f0,f1,f2,f3\n"));
    }

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn malformed_csv_diagnostics() {
        let err = parse("id,label,f0\n0,pos,1.0\n1,maybe,2.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("id,label,f0\n0,pos,1.0\n1,neg,abc\n").unwrap_err();
        assert!(err.to_string().contains("column 3"), "{err}");
        let err = parse("id,lbl,f0\n0,pos,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse("id,label,f0\n0,pos,1\n0,neg,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("id,label,f0\n0,pos,1\n1,neg,2,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        let err = parse("id,label,f0\n").unwrap_err();
        assert!(err.to_string().contains("no data rows"));
    }

    #[test]
    fn flips_round_trip() {
        let mut record = FlipRecord::default();
        record.flipped.insert(3, FlipDirection::PosToNeg);
        record.flipped.insert(11, FlipDirection::NegToPos);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flips.csv");
        write_flips(&path, &record).unwrap();
        assert_eq!(read_flips(&path).unwrap(), record);
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new("value");
        m.train_config = Some(TrainConfig::default());
        m.sampler = Some(SamplerConfig::for_players(8));
        m.metrics = MetricKind::ALL.to_vec();
        m.tracked_ids = vec![1, 4];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn float_format_is_lossless(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
