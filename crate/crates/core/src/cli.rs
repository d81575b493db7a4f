//! Command-line front end.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::harness::{
    self, detection_report, roman, synth_gaussian, ExperimentConfig, FlipDirection, NoiseSpec,
    Ranking, SynthConfig, COMMON_BOTTOM_FRACTION,
};
use crate::io::{self, InputFile, RunManifest, WallClock};
use crate::metrics::{validate_test_set, MetricKind};
use crate::model::{ClassWeight, TrainConfig};
use crate::shapley::{exact_shapley_multi, mc_shapley_multi, SamplerConfig, ShapleyVector};

#[derive(Debug, Parser)]
#[command(
    name = "dataval",
    version,
    about = "Shapley-value data valuation and label-noise detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic Gaussian train/test CSVs.
    Synth(SynthArgs),
    /// Compute Shapley values of every training point.
    Value(ValueArgs),
    /// Inject label noise, value the noisy set and report detection rates.
    NoiseExperiment(NoiseArgs),
    /// Detection report for an existing SV table and flip record.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub n_positive: usize,
    #[arg(long, default_value_t = 400)]
    pub n_negative: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Distance between class means, in standard deviations.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct EngineArgs {
    /// Training CSV (id,label,f0,...).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test CSV; must contain both classes.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// accuracy, recall or specificity; repeatable.
    #[arg(long = "metric")]
    pub metrics: Vec<MetricKind>,
    /// Enumerate all coalitions instead of sampling permutations.
    #[arg(long)]
    pub exact: bool,
    /// Maximum number of sampled permutations (default 3N).
    #[arg(long)]
    pub permutations: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep sampling after the convergence monitor fires.
    #[arg(long)]
    pub no_early_stop: bool,
    /// `balanced` or a fixed positive-class loss multiplier.
    #[arg(long, default_value = "balanced", value_parser = parse_class_weight)]
    pub class_weight: ClassWeight,
    /// Worker threads (0 = all cores). Never affects results.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Re-run with every setting taken from this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValueArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Comma-separated per-class noise levels.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
    pub levels: Vec<f64>,
    /// Bottom fraction reported for every level besides the level itself.
    #[arg(long = "bottom-fraction", default_value_t = COMMON_BOTTOM_FRACTION)]
    pub bottom_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// SV table (id,sv,...).
    #[arg(long)]
    pub sv: PathBuf,
    /// Flip record (id,direction).
    #[arg(long)]
    pub flips: PathBuf,
    #[arg(long = "bottom-fraction", default_values_t = vec![COMMON_BOTTOM_FRACTION])]
    pub bottom_fractions: Vec<f64>,
    /// Also write detection.csv here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_class_weight(s: &str) -> std::result::Result<ClassWeight, String> {
    if s == "balanced" {
        return Ok(ClassWeight::Balanced);
    }
    match s.parse::<f64>() {
        Ok(w) if w > 0.0 && w.is_finite() => Ok(ClassWeight::Fixed(w)),
        _ => Err(format!(
            "expected `balanced` or a positive number, got {s:?}"
        )),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Value(args) => cmd_value(&args),
        Command::NoiseExperiment(args) => cmd_noise_experiment(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let started = (now_ms(), Instant::now());
    let cfg = SynthConfig {
        n_positive: args.n_positive,
        n_negative: args.n_negative,
        dim: args.dim,
        class_separation: args.separation,
        seed: args.seed,
    };
    let (train, test) = synth_gaussian(&cfg)?;
    ensure_dir(&args.out_dir)?;
    io::write_dataset(&args.out_dir.join("train.csv"), &train)?;
    io::write_dataset(&args.out_dir.join("test.csv"), &test)?;
    let mut manifest = RunManifest::new("synth");
    manifest.synth = Some(cfg);
    manifest.threads = 1;
    manifest.wall_clock = wall_clock(started);
    manifest.write(&args.out_dir.join("manifest.json"))
}

fn wall_clock(started: (u128, Instant)) -> WallClock {
    WallClock {
        started_unix_ms: started.0,
        elapsed_ms: started.1.elapsed().as_millis(),
    }
}

/// Settings resolved from flags or from a prior manifest.
struct Resolved {
    train_path: PathBuf,
    test_path: PathBuf,
    train: Dataset,
    test: Dataset,
    metrics: Vec<MetricKind>,
    exact: bool,
    train_config: TrainConfig,
    sampler: SamplerConfig,
    tracked_ids: Option<Vec<u64>>,
    noise_levels: Option<Vec<f64>>,
    bottom_fractions: Option<Vec<f64>>,
}

fn resolve(engine: &EngineArgs, default_metrics: &[MetricKind]) -> Result<Resolved> {
    if let Some(path) = &engine.manifest {
        let m = RunManifest::read(path)?;
        let train_in = m
            .train
            .ok_or_else(|| Error::Usage("manifest lacks a train input".into()))?;
        let test_in = m
            .test
            .ok_or_else(|| Error::Usage("manifest lacks a test input".into()))?;
        for input in [&train_in, &test_in] {
            let digest = io::sha256_file(&input.path)?;
            if digest != input.sha256 {
                return Err(Error::Usage(format!(
                    "{} changed since the manifest was written",
                    input.path.display()
                )));
            }
        }
        let train = io::read_dataset(&train_in.path)?;
        let test = io::read_dataset(&test_in.path)?;
        return Ok(Resolved {
            train_path: train_in.path,
            test_path: test_in.path,
            train,
            test,
            metrics: m.metrics,
            exact: m.exact,
            train_config: m
                .train_config
                .ok_or_else(|| Error::Usage("manifest lacks train_config".into()))?,
            sampler: m
                .sampler
                .ok_or_else(|| Error::Usage("manifest lacks sampler".into()))?,
            // an empty list means each experiment drew its own defaults
            tracked_ids: (!m.tracked_ids.is_empty()).then_some(m.tracked_ids),
            noise_levels: Some(m.noise_levels),
            bottom_fractions: Some(m.bottom_fractions),
        });
    }

    let train_path = engine
        .train
        .clone()
        .ok_or_else(|| Error::Usage("--train is required".into()))?;
    let test_path = engine
        .test
        .clone()
        .ok_or_else(|| Error::Usage("--test is required".into()))?;
    let train = io::read_dataset(&train_path)?;
    let test = io::read_dataset(&test_path)?;
    let mut metrics = engine.metrics.clone();
    if metrics.is_empty() {
        metrics = default_metrics.to_vec();
    }
    if metrics.is_empty() {
        return Err(Error::Usage("at least one --metric is required".into()));
    }
    let mut seen = Vec::new();
    metrics.retain(|m| {
        let fresh = !seen.contains(m);
        seen.push(*m);
        fresh
    });

    let train_config = TrainConfig {
        class_weight_positive: engine.class_weight,
        ..TrainConfig::default()
    };
    let mut sampler = SamplerConfig::for_players(train.len()).with_seed(engine.seed);
    if let Some(p) = engine.permutations {
        sampler.max_permutations = p;
    }
    // the monitor cannot fire before a full window, so early stopping is moot
    sampler.early_stop =
        !engine.no_early_stop && (sampler.convergence_window as u64) < sampler.max_permutations;
    Ok(Resolved {
        train_path,
        test_path,
        train,
        test,
        metrics,
        exact: engine.exact,
        train_config,
        sampler,
        tracked_ids: None,
        noise_levels: None,
        bottom_fractions: None,
    })
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot build thread pool: {e}")))
}

/// Two ids per input class, drawn with the run seed.
fn default_tracked(train: &Dataset, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut out = Vec::new();
    for label in [Label::Positive, Label::Negative] {
        let members: Vec<u64> = train
            .iter()
            .filter(|p| p.label == label)
            .map(|p| p.id)
            .collect();
        let k = members.len().min(2);
        let mut picked: Vec<u64> = index::sample(&mut rng, members.len(), k)
            .into_iter()
            .map(|i| members[i])
            .collect();
        picked.sort_unstable();
        out.extend(picked);
    }
    out
}

struct Valued {
    vectors: Vec<ShapleyVector>,
    traces: Vec<Vec<crate::shapley::Checkpoint>>,
    converged: Vec<Option<u64>>,
}

fn value_all(r: &Resolved, train: &Dataset) -> Result<Valued> {
    if r.exact {
        let vectors = exact_shapley_multi(train, &r.test, &r.metrics, &r.train_config)?;
        Ok(Valued {
            traces: vec![Vec::new(); vectors.len()],
            converged: vec![None; vectors.len()],
            vectors,
        })
    } else {
        let runs = mc_shapley_multi(train, &r.test, &r.metrics, &r.train_config, &r.sampler)?;
        let converged = runs.iter().map(|run| run.converged_at).collect();
        let (vectors, traces) = runs
            .into_iter()
            .map(|run| (run.estimates, run.trace))
            .unzip();
        Ok(Valued {
            vectors,
            traces,
            converged,
        })
    }
}

fn base_manifest(command: &str, r: &Resolved, threads: usize) -> Result<RunManifest> {
    let mut m = RunManifest::new(command);
    m.train = Some(InputFile::describe(&r.train_path)?);
    m.test = Some(InputFile::describe(&r.test_path)?);
    m.train_config = Some(r.train_config.clone());
    m.sampler = Some(r.sampler.clone());
    m.exact = r.exact;
    m.metrics = r.metrics.clone();
    m.threads = threads;
    Ok(m)
}

pub fn cmd_value(args: &ValueArgs) -> Result<()> {
    let started = (now_ms(), Instant::now());
    let engine = &args.engine;
    let r = resolve(engine, &[])?;
    validate_test_set(&r.test)?;
    let tracked = r
        .tracked_ids
        .clone()
        .unwrap_or_else(|| default_tracked(&r.train, r.sampler.seed));

    let pool = thread_pool(engine.threads)?;
    let valued = pool.install(|| value_all(&r, &r.train))?;

    ensure_dir(&engine.out_dir)?;
    for (sv, trace) in valued.vectors.iter().zip(&valued.traces) {
        io::write_sv_table(
            &engine.out_dir.join(format!("sv_{}.csv", sv.metric)),
            sv,
            &r.train,
        )?;
        if !r.exact {
            io::write_trace(
                &engine.out_dir.join(format!("trace_{}.csv", sv.metric)),
                trace,
                &sv.ids,
                &tracked,
            )?;
        }
    }
    let mut manifest = base_manifest("value", &r, pool.current_num_threads())?;
    manifest.tracked_ids = tracked;
    manifest.results = valued
        .vectors
        .iter()
        .zip(&valued.converged)
        .map(|(sv, c)| io::ValueSummary::new(sv, *c))
        .collect();
    manifest.wall_clock = wall_clock(started);
    manifest.write(&engine.out_dir.join("manifest.json"))
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "experiment",
    "level",
    "metric",
    "direction",
    "flips",
    "level_fraction",
    "captured_at_level",
    "common_fraction",
    "captured_at_common",
    "vacuous",
];

pub fn cmd_noise_experiment(args: &NoiseArgs) -> Result<()> {
    let started = (now_ms(), Instant::now());
    let engine = &args.engine;
    let r = resolve(engine, &MetricKind::ALL)?;
    validate_test_set(&r.test)?;
    let levels = r
        .noise_levels
        .clone()
        .unwrap_or_else(|| args.levels.clone());
    let common = r
        .bottom_fractions
        .as_ref()
        .and_then(|f| f.first().copied())
        .unwrap_or(args.bottom_fraction);
    if !(common > 0.0 && common <= 1.0) {
        return Err(Error::InvalidBottomFraction(common));
    }
    let noise_seed = r.sampler.seed;
    let pool = thread_pool(engine.threads)?;
    ensure_dir(&engine.out_dir)?;

    let mut summary: Vec<Vec<String>> = Vec::new();
    for (k, &level) in levels.iter().enumerate() {
        let name = format!("exp-{}", roman(k + 1));
        let dir = engine.out_dir.join(&name);
        ensure_dir(&dir)?;
        let cfg = ExperimentConfig {
            noise: NoiseSpec::symmetric(level, noise_seed),
            metrics: r.metrics.clone(),
            train: r.train_config.clone(),
            sampler: r.sampler.clone(),
            exact: r.exact,
            bottom_fractions: vec![common],
        };
        let outcome = pool.install(|| harness::run_noise_experiment(&r.train, &r.test, &cfg))?;
        let tracked = r
            .tracked_ids
            .clone()
            .unwrap_or_else(|| default_tracked(&outcome.noisy, r.sampler.seed));

        io::write_dataset(&dir.join("noisy_train.csv"), &outcome.noisy)?;
        io::write_flips(&dir.join("flips.csv"), &outcome.record)?;
        for m in &outcome.per_metric {
            let metric = m.values.metric;
            io::write_sv_table(
                &dir.join(format!("sv_{metric}.csv")),
                &m.values,
                &outcome.noisy,
            )?;
            io::write_mapping(&dir.join(format!("mapping_{metric}.csv")), &m.mapping)?;
            io::write_detection(
                &dir.join(format!("detection_{metric}.csv")),
                Some(metric),
                &m.reports,
            )?;
            if let Some(run) = &m.run {
                io::write_trace(
                    &dir.join(format!("trace_{metric}.csv")),
                    &run.trace,
                    &run.estimates.ids,
                    &tracked,
                )?;
            }

            let at_level = (level > 0.0).then(|| &m.reports[0]);
            let at_common = m
                .reports
                .iter()
                .find(|rep| rep.bottom_fraction == common)
                .expect("common fraction always reported");
            for d in [FlipDirection::PosToNeg, FlipDirection::NegToPos] {
                summary.push(vec![
                    name.clone(),
                    level.to_string(),
                    metric.to_string(),
                    d.to_string(),
                    at_common.flips(d).to_string(),
                    at_level.map_or(String::new(), |rep| rep.bottom_fraction.to_string()),
                    at_level.map_or(String::new(), |rep| io::fmt_f64(rep.captured(d))),
                    common.to_string(),
                    io::fmt_f64(at_common.captured(d)),
                    at_common.vacuous(d).to_string(),
                ]);
            }
        }

        let mut manifest = base_manifest("noise-experiment", &r, pool.current_num_threads())?;
        manifest.noise_levels = vec![level];
        manifest.noise_seed = Some(noise_seed);
        manifest.bottom_fractions = vec![common];
        manifest.tracked_ids = tracked;
        manifest.results = outcome
            .per_metric
            .iter()
            .map(|m| io::ValueSummary::new(&m.values, m.run.as_ref().and_then(|r| r.converged_at)))
            .collect();
        manifest.wall_clock = wall_clock(started);
        manifest.write(&dir.join("manifest.json"))?;
    }

    let summary_path = engine.out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(&summary_path, io),
        other => Error::Usage(format!("{other:?}")),
    })?;
    let write_err = |e: csv::Error| Error::Usage(e.to_string());
    w.write_record(SUMMARY_HEADER).map_err(write_err)?;
    for row in &summary {
        w.write_record(row).map_err(write_err)?;
    }
    w.flush().map_err(|e| Error::io(&summary_path, e))?;

    let mut manifest = base_manifest("noise-experiment", &r, pool.current_num_threads())?;
    manifest.noise_levels = levels;
    manifest.noise_seed = Some(noise_seed);
    manifest.bottom_fractions = vec![common];
    manifest.tracked_ids = r.tracked_ids.clone().unwrap_or_default();
    manifest.wall_clock = wall_clock(started);
    manifest.write(&engine.out_dir.join("manifest.json"))
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let ranking = Ranking::from_pairs(io::read_sv_pairs(&args.sv)?);
    let record = io::read_flips(&args.flips)?;
    let reports = args
        .bottom_fractions
        .iter()
        .map(|&f| detection_report(&ranking, &record, f))
        .collect::<Result<Vec<_>>>()?;

    println!("{}", io::DETECTION_HEADER.join(","));
    for rep in &reports {
        for row in io::detection_rows(None, rep) {
            println!("{}", row.join(","));
        }
    }
    if let Some(dir) = &args.out_dir {
        ensure_dir(dir)?;
        io::write_detection(&dir.join("detection.csv"), None, &reports)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_weight_flag() {
        assert_eq!(
            parse_class_weight("balanced").unwrap(),
            ClassWeight::Balanced
        );
        assert_eq!(parse_class_weight("2.5").unwrap(), ClassWeight::Fixed(2.5));
        assert!(parse_class_weight("-1").is_err());
    }

    #[test]
    fn tracked_ids_two_per_class() {
        let (train, _) = synth_gaussian(&SynthConfig {
            n_positive: 5,
            n_negative: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        let ids = default_tracked(&train, 3);
        assert_eq!(ids.len(), 4);
        let pos = ids
            .iter()
            .filter(|&&id| train.label(train.index_of(id).unwrap()).is_positive())
            .count();
        assert_eq!(pos, 2);
        assert_eq!(ids, default_tracked(&train, 3));
    }
}
