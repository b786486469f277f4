//! Command-line front end: `synth`, `preprocess`, `align`, `evaluate` and
//! `inspect`.
//!
//! Every artifact is staged under a temporary name and renamed into place on
//! success, so a failed command never leaves partial output. Each command
//! also writes a run manifest next to its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::alignment::{apply_coral, diag_dominance, fit_coral, fit_ea, fit_la, LaOptions, TransformRecord};
use crate::container::{read_dataset, read_manifest, write_dataset, Dataset, DatasetEntry, MANIFEST_FILE};
use crate::decoding::{log_variance, ModelRecord};
use crate::error::{Error, Result};
use crate::model::{pair_classes, ClassPairing, DomainSet};
use crate::pipeline::{
    compare_configs, loso_evaluate, Aggregates, Comparison, EvalReport, EvalSettings, PipelineConfig,
    DEFAULT_M_VALUES, DEFAULT_REPEATS, PRESET_NAMES,
};
use crate::preprocess::{
    bandpass_domain, bandpass_recording, car_domain, car_matrix, crop_domain, downsample, downsample_recording,
    epoch, BandpassSpec, EpochSpec, Recording,
};
use crate::spd::MeanEstimator;
use crate::synth::{generate, GeneratorSpec, InterferenceSpec};

/// Optional cap on worker threads for `evaluate`.
pub const THREADS_ENV: &str = "COVALIGN_THREADS";
pub const RUN_MANIFEST_FILE: &str = "run.json";

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "covalign", version, about = "Covariance alignment for cross-subject EEG decoding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-subject dataset.
    Synth(SynthArgs),
    /// Filter, re-reference, downsample and epoch a dataset.
    Preprocess(PreprocessArgs),
    /// Fit and apply an alignment to every domain of a dataset.
    Align(AlignArgs),
    /// Leave-one-subject-out evaluation of one or more pipelines.
    Evaluate(EvaluateArgs),
    /// Summarize a transform, model, report or dataset.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec JSON; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Trials per class.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub rate: Option<f64>,
    /// Spread of the per-subject mixing around identity.
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub contrast: Option<f64>,
    /// Add strong out-of-band interference with default settings.
    #[arg(long)]
    pub interference: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pass band in Hz, `low,high`.
    #[arg(long, value_parser = parse_pair)]
    pub band: Option<(f64, f64)>,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Forward-backward filtering (the default).
    #[arg(long, conflicts_with = "causal")]
    pub zero_phase: bool,
    /// Single forward pass instead of zero-phase filtering.
    #[arg(long)]
    pub causal: bool,
    #[arg(long)]
    pub car: bool,
    #[arg(long)]
    pub downsample: Option<usize>,
    /// Window in seconds relative to each cue, `start,end`. Pre-epoched
    /// domains are cropped relative to the trial start.
    #[arg(long, value_parser = parse_pair)]
    pub epoch: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMethod {
    Ea,
    La,
    Coral,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long, value_enum)]
    pub method: AlignMethod,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Source-to-target class pairing JSON (LA only).
    #[arg(long)]
    pub pairing: Option<PathBuf>,
    /// Target class reference shrinkage (LA only).
    #[arg(long)]
    pub shrinkage: Option<f64>,
    /// Use log-Euclidean class means (LA only).
    #[arg(long)]
    pub log_euclidean: bool,
    /// Target domain id for LA and CORAL; defaults to the last domain.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Preset name or pipeline JSON file; repeat to compare.
    #[arg(long, required = true)]
    pub config: Vec<String>,
    /// Calibration sizes.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report JSON; a CSV with the same stem is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
    /// Also write the transform or filter matrix as CSV.
    #[arg(long)]
    pub matrix_csv: Option<PathBuf>,
}

/// Provenance written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "run")]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: u64,
    pub duration_s: f64,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => {
            let a = a.parse::<f64>().map_err(|e| format!("'{a}': {e}"))?;
            let b = b.parse::<f64>().map_err(|e| format!("'{b}': {e}"))?;
            Ok((a, b))
        }
        _ => Err(format!("expected two comma-separated numbers, got '{s}'")),
    }
}

fn to_json<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::json(path, e))
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    dir.join(format!(".{name}.tmp-{}", std::process::id()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

/// Writes `bytes` to a temporary sibling, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    let tmp = temp_sibling(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// An output directory built under a temporary name.
struct StagedDir {
    tmp: PathBuf,
    dest: PathBuf,
    done: bool,
}

impl StagedDir {
    fn new(dest: &Path) -> Result<Self> {
        if dest.exists() {
            let replaceable = dest.is_dir()
                && (dest.join(MANIFEST_FILE).exists()
                    || dest.join(RUN_MANIFEST_FILE).exists()
                    || fs::read_dir(dest).map_err(|e| Error::io(dest, e))?.next().is_none());
            if !replaceable {
                return Err(Error::InvalidArgument(format!(
                    "refusing to replace {}: not an empty directory or previous output",
                    dest.display()
                )));
            }
        }
        ensure_parent(dest)?;
        let tmp = temp_sibling(dest);
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(StagedDir {
            tmp,
            dest: dest.to_owned(),
            done: false,
        })
    }

    fn path(&self) -> &Path {
        &self.tmp
    }

    fn write(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let path = self.tmp.join(rel);
        ensure_parent(&path)?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    fn commit(mut self) -> Result<()> {
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).map_err(|e| Error::io(&self.dest, e))?;
        }
        fs::rename(&self.tmp, &self.dest).map_err(|e| Error::io(&self.dest, e))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

struct Clock {
    started: Instant,
    unix_s: u64,
}

impl Clock {
    fn start() -> Self {
        Clock {
            started: Instant::now(),
            unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn manifest(&self, command: &str, config: Value, seeds: Vec<u64>, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>) -> RunManifest {
        RunManifest {
            command: command.to_owned(),
            args: std::env::args().collect(),
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs,
            outputs,
            started_unix_s: self.unix_s,
            duration_s: self.started.elapsed().as_secs_f64(),
        }
    }
}

fn config_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

fn safe_name(index: usize, id: &str) -> String {
    let id: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:03}_{id}")
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let clock = Clock::start();
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<GeneratorSpec>(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => GeneratorSpec::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = args.$flag { spec.$field = v; }
        )*};
    }
    set!(subjects => n_subjects, channels => channels, samples => samples, trials => trials_per_class,
         rate => sampling_rate, shift => shift_strength, noise => noise_level, contrast => class_contrast,
         seed => seed);
    if args.interference {
        spec.interference.get_or_insert_with(InterferenceSpec::default);
    }
    let (domains, truth) = generate(&spec)?;
    let stage = StagedDir::new(&args.out)?;
    write_dataset(stage.path(), &Dataset::from_domains(domains))?;
    stage.write("truth.json", to_json(&truth, Path::new("truth.json"))?.as_bytes())?;
    let manifest = clock.manifest(
        "synth",
        config_value(&spec),
        vec![spec.seed],
        args.spec.iter().cloned().collect(),
        vec![args.out.clone()],
    );
    stage.write(RUN_MANIFEST_FILE, to_json(&manifest, Path::new(RUN_MANIFEST_FILE))?.as_bytes())?;
    stage.commit()?;
    println!("wrote {} subjects to {}", spec.n_subjects, args.out.display());
    Ok(())
}

fn preprocess_entry(entry: &DatasetEntry, args: &PreprocessArgs, band: Option<&BandpassSpec>) -> Result<DomainSet> {
    let d = &entry.domain;
    let factor = args.downsample.unwrap_or(1);
    let window = args.epoch.map(|(start_s, end_s)| EpochSpec { start_s, end_s });
    if let Some(events) = &entry.events {
        // Continuous recording: filter before cutting epochs.
        if d.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "domain '{}' has events but {} trials; a continuous recording is one trial",
                d.domain_id(),
                d.len()
            )));
        }
        let window = window.ok_or_else(|| {
            Error::InvalidArgument(format!("domain '{}' is continuous and needs --epoch", d.domain_id()))
        })?;
        let first = &d.trials()[0];
        let mut rec = Recording {
            data: first.data().clone(),
            sampling_rate: first.sampling_rate(),
        };
        if let Some(spec) = band {
            rec = bandpass_recording(&rec, spec)?;
        }
        if args.car {
            rec.data = car_matrix(&rec.data)?;
        }
        rec = downsample_recording(&rec, factor)?;
        let onsets: Vec<usize> = events.iter().map(|e| e.onset / factor).collect();
        let labels: Option<Vec<_>> = events.iter().map(|e| e.label.clone()).collect();
        let out = epoch(d.domain_id(), &rec, &onsets, labels, &window)?;
        return match first.channel_names() {
            Some(names) => {
                let trials = out
                    .trials()
                    .iter()
                    .map(|t| t.clone().with_channel_names(names.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(out.with_trials(trials))
            }
            None => Ok(out),
        };
    }
    let mut out = d.clone();
    if let Some(spec) = band {
        out = bandpass_domain(&out, spec)?;
    }
    if args.car {
        out = car_domain(&out)?;
    }
    if factor != 1 {
        let trials = out.trials().iter().map(|t| downsample(t, factor)).collect::<Result<Vec<_>>>()?;
        out = out.with_trials(trials);
    }
    if let Some(w) = &window {
        out = crop_domain(&out, w)?;
    }
    Ok(out)
}

pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<()> {
    let clock = Clock::start();
    let band = args.band.map(|(low_hz, high_hz)| BandpassSpec {
        low_hz,
        high_hz,
        order: args.order,
        zero_phase: !args.causal,
    });
    let dataset = read_dataset(&args.input)?;
    let domains = dataset
        .entries
        .iter()
        .map(|e| preprocess_entry(e, args, band.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let stage = StagedDir::new(&args.out)?;
    write_dataset(stage.path(), &Dataset::from_domains(domains))?;
    let config = serde_json::json!({
        "bandpass": band,
        "car": args.car,
        "downsample": args.downsample,
        "epoch": args.epoch,
    });
    let manifest = clock.manifest("preprocess", config, vec![], vec![args.input.clone()], vec![args.out.clone()]);
    stage.write(RUN_MANIFEST_FILE, to_json(&manifest, Path::new(RUN_MANIFEST_FILE))?.as_bytes())?;
    stage.commit()?;
    println!("preprocessed {} domains into {}", dataset.entries.len(), args.out.display());
    Ok(())
}

fn target_index(domains: &[DomainSet], target: Option<&str>) -> Result<usize> {
    match target {
        None => Ok(domains.len() - 1),
        Some(id) => domains
            .iter()
            .position(|d| d.domain_id() == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no domain '{id}' in the dataset"))),
    }
}

fn features_csv(d: &DomainSet, features: &DMatrix<f64>) -> String {
    let mut out = String::from("label");
    for j in 0..features.ncols() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for (i, row) in features.row_iter().enumerate() {
        out.push_str(d.labels().map_or("", |l| l[i].as_str()));
        for v in row.iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn domain_features(d: &DomainSet) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = d.trials().iter().map(|t| log_variance(t.data())).collect();
    DMatrix::from_fn(rows.len(), d.channels(), |i, j| rows[i][j])
}

pub fn cmd_align(args: &AlignArgs) -> Result<()> {
    let clock = Clock::start();
    if args.method != AlignMethod::La && (args.pairing.is_some() || args.shrinkage.is_some() || args.log_euclidean) {
        return Err(Error::InvalidArgument(
            "--pairing, --shrinkage and --log-euclidean apply to la only".into(),
        ));
    }
    let domains = read_dataset(&args.input)?.into_domains();
    if domains.is_empty() {
        return Err(Error::InvalidArgument("dataset has no domains".into()));
    }
    let stage = StagedDir::new(&args.out)?;
    let mut records = Vec::new();
    let mut config = serde_json::json!({ "method": args.method });
    match args.method {
        AlignMethod::Ea => {
            let mut aligned = Vec::with_capacity(domains.len());
            for (i, d) in domains.iter().enumerate() {
                let t = fit_ea(d)?;
                records.push((i, TransformRecord::ea(d.domain_id(), &t)));
                aligned.push(t.apply_domain(d)?);
            }
            write_dataset(stage.path(), &Dataset::from_domains(aligned))?;
        }
        AlignMethod::La => {
            if domains.iter().any(|d| d.labels().is_none()) {
                return Err(Error::LabelsRequired("LA"));
            }
            let ti = target_index(&domains, args.target.as_deref())?;
            let explicit: Option<ClassPairing> = match &args.pairing {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    Some(
                        serde_json::from_str(&text)
                            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?,
                    )
                }
                None => None,
            };
            let options = LaOptions {
                estimator: if args.log_euclidean {
                    MeanEstimator::LogEuclidean
                } else {
                    MeanEstimator::Euclidean
                },
                target_shrinkage: args.shrinkage.unwrap_or(LaOptions::default().target_shrinkage),
            };
            let target = &domains[ti];
            let mut aligned = Vec::with_capacity(domains.len());
            for (i, d) in domains.iter().enumerate() {
                if i == ti {
                    aligned.push(d.clone());
                    continue;
                }
                let pairing = match &explicit {
                    Some(p) => ClassPairing::new(
                        p.iter()
                            .filter(|(s, _)| d.classes().contains(*s))
                            .map(|(s, t)| (s.clone(), t.clone()))
                            .collect(),
                    )?,
                    None => pair_classes(&d.classes(), &target.classes(), None)?,
                };
                let t = fit_la(d, target, &pairing, &options)?;
                records.push((i, TransformRecord::la(d.domain_id(), target.domain_id(), &t)));
                aligned.push(t.apply_domain(d)?);
            }
            write_dataset(stage.path(), &Dataset::from_domains(aligned))?;
            config["target"] = target.domain_id().into();
            config["la"] = config_value(&options);
            config["pairing"] = config_value(&explicit);
        }
        AlignMethod::Coral => {
            let ti = target_index(&domains, args.target.as_deref())?;
            let target_features = domain_features(&domains[ti]);
            for (i, d) in domains.iter().enumerate() {
                let f = domain_features(d);
                let f = if i == ti {
                    f
                } else {
                    let t = fit_coral(&f, &target_features)?;
                    records.push((i, TransformRecord::coral(d.domain_id(), domains[ti].domain_id(), &t)));
                    apply_coral(&t, &f)?
                };
                let name = format!("features/{}.csv", safe_name(i, d.domain_id()));
                stage.write(name, features_csv(d, &f).as_bytes())?;
            }
            config["target"] = domains[ti].domain_id().into();
            config["features"] = "channel log-variance".into();
        }
    }
    for (i, record) in &records {
        let id = match record {
            TransformRecord::Ea { domain_id, .. }
            | TransformRecord::La { domain_id, .. }
            | TransformRecord::Coral { domain_id, .. } => domain_id,
        };
        let name = format!("transforms/{}.json", safe_name(*i, id));
        stage.write(&name, to_json(record, Path::new(&name))?.as_bytes())?;
    }
    let manifest = clock.manifest("align", config, vec![], vec![args.input.clone()], vec![args.out.clone()]);
    stage.write(RUN_MANIFEST_FILE, to_json(&manifest, Path::new(RUN_MANIFEST_FILE))?.as_bytes())?;
    stage.commit()?;
    println!("aligned {} domains ({} transforms) into {}", domains.len(), records.len(), args.out.display());
    Ok(())
}

/// A preset name, or a path to pipeline JSON.
pub fn resolve_config(spec: &str) -> Result<PipelineConfig> {
    if let Some(c) = PipelineConfig::preset(spec) {
        return Ok(c);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "'{spec}' is neither a preset ({}) nor a file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: PipelineConfig =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}='{v}' is not a thread count"))),
        _ => Ok(None),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |a| format!("{a:.4}"))
}

fn aggregates_table(agg: &Aggregates) -> String {
    let mut out = String::from("m\tmean\tstd\truns\tskipped\n");
    for o in &agg.overall {
        let s = &o.summary;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            o.m,
            fmt_opt(s.mean),
            fmt_opt(s.std),
            s.n_runs,
            s.n_skipped
        );
    }
    out
}

fn comparison_table(c: &Comparison) -> String {
    let mut out = String::from("config");
    for m in &c.m_values {
        let _ = write!(out, "\tm={m}");
    }
    out.push_str("\tmean\n");
    for row in &c.rows {
        out.push_str(&row.config);
        for v in &row.means {
            let _ = write!(out, "\t{}", fmt_opt(*v));
        }
        let _ = writeln!(out, "\t{}", fmt_opt(row.mean));
    }
    out
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let clock = Clock::start();
    let configs = args.config.iter().map(|c| resolve_config(c)).collect::<Result<Vec<_>>>()?;
    let dataset = read_dataset(&args.data)?;
    if let Some(e) = dataset.entries.iter().find(|e| e.events.is_some()) {
        return Err(Error::InvalidArgument(format!(
            "domain '{}' is a continuous recording; epoch it with preprocess first",
            e.domain.domain_id()
        )));
    }
    let domains = dataset.into_domains();
    let settings = EvalSettings {
        m_values: args.m.clone().unwrap_or_else(|| DEFAULT_M_VALUES.to_vec()),
        repeats: args.repeats,
        seed: args.seed,
        threads: thread_cap(args.threads)?,
    };
    let csv_path = args.out.with_extension("csv");
    let (json, csv, table) = if configs.len() == 1 {
        let report = loso_evaluate(&domains, &configs[0], &settings)?;
        (to_json(&report, &args.out)?, report.to_csv(), aggregates_table(&report.aggregates))
    } else {
        let cmp = compare_configs(&domains, &configs, &settings)?;
        (to_json(&cmp, &args.out)?, cmp.to_csv(), comparison_table(&cmp))
    };
    let run_path = args.out.with_extension("run.json");
    let manifest = clock.manifest(
        "evaluate",
        serde_json::json!({ "configs": configs, "settings": settings }),
        vec![settings.seed],
        vec![args.data.clone()],
        vec![args.out.clone(), csv_path.clone()],
    );
    write_atomic(&args.out, json.as_bytes())?;
    write_atomic(&csv_path, csv.as_bytes())?;
    write_atomic(&run_path, to_json(&manifest, &run_path)?.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn eigen_range(m: &crate::matrix_json::MatrixJson) -> Result<(f64, f64)> {
    let m = m.to_matrix()?;
    let ev = nalgebra::SymmetricEigen::new(m).eigenvalues;
    Ok((ev.min(), ev.max()))
}

fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn describe_map(out: &mut String, map: &DMatrix<f64>) {
    let _ = writeln!(out, "shape: {}x{}", map.nrows(), map.ncols());
    let _ = writeln!(out, "diag_dominance: {:.6}", diag_dominance(map));
}

fn unknown(path: &Path, why: impl std::fmt::Display) -> Error {
    Error::UnknownArtifact(format!("{}: {why}", path.display()))
}

fn parse_as<T: for<'de> Deserialize<'de>>(path: &Path, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| unknown(path, e))
}

/// Human-readable summary of an artifact, plus its main matrix if any.
pub fn inspect(path: &Path) -> Result<(String, Option<DMatrix<f64>>)> {
    let mut out = String::new();
    if path.is_dir() {
        let manifest = read_manifest(path).map_err(|e| unknown(path, e))?;
        let _ = writeln!(out, "kind: dataset");
        let _ = writeln!(out, "domains: {}", manifest.domains.len());
        for d in &manifest.domains {
            let classes = d.labels.as_ref().map_or(0, |l| l.iter().collect::<std::collections::BTreeSet<_>>().len());
            let _ = writeln!(
                out,
                "{}\t{} trials\t{}x{} at {} Hz\t{} classes",
                d.domain_id, d.n_trials, d.channels, d.samples, d.sampling_rate_hz, classes
            );
        }
        return Ok((out, None));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| unknown(path, e))?;
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| unknown(path, "no \"kind\" field"))?
        .to_owned();
    let _ = writeln!(out, "kind: {kind}");
    let matrix = match kind.as_str() {
        "ea" | "la" | "coral" => match parse_as::<TransformRecord>(path, value)? {
            TransformRecord::Ea {
                domain_id,
                n_trials_fit,
                reference,
                map,
            } => {
                let map = map.to_matrix()?;
                let _ = writeln!(out, "domain: {domain_id}");
                let _ = writeln!(out, "n_trials_fit: {n_trials_fit}");
                describe_map(&mut out, &map);
                let (lo, hi) = eigen_range(&reference)?;
                let _ = writeln!(out, "reference_eigenvalues: [{lo:.6e}, {hi:.6e}]");
                let _ = writeln!(out, "reference_condition: {:.6e}", hi / lo);
                Some(map)
            }
            TransformRecord::La {
                domain_id,
                target_domain_id,
                pairing,
                per_class,
            } => {
                let _ = writeln!(out, "domain: {domain_id}");
                let _ = writeln!(out, "target: {target_domain_id}");
                for (s, t) in pairing.iter() {
                    let map = per_class.get(s).ok_or_else(|| unknown(path, format!("no map for class '{s}'")))?;
                    let map = map.to_matrix()?;
                    let _ = writeln!(
                        out,
                        "class {s} -> {t}: shape {}x{}, diag_dominance {:.6}",
                        map.nrows(),
                        map.ncols(),
                        diag_dominance(&map)
                    );
                }
                None
            }
            TransformRecord::Coral {
                domain_id,
                target_domain_id,
                map,
                source_cov,
                target_cov,
            } => {
                let map = map.to_matrix()?;
                let _ = writeln!(out, "domain: {domain_id}");
                let _ = writeln!(out, "target: {target_domain_id}");
                describe_map(&mut out, &map);
                for (name, c) in [("source", &source_cov), ("target", &target_cov)] {
                    let (lo, hi) = eigen_range(c)?;
                    let _ = writeln!(out, "{name}_cov_eigenvalues: [{lo:.6e}, {hi:.6e}]");
                }
                Some(map)
            }
        },
        "model" => {
            let m: ModelRecord = parse_as(path, value)?;
            let filters = m.filters.to_matrix()?;
            let _ = writeln!(out, "filters: {}x{}", filters.nrows(), filters.ncols());
            let _ = writeln!(out, "csp_classes: {} / {}", m.csp_class_order.0, m.csp_class_order.1);
            let spectrum: Vec<String> = m.spectrum.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(out, "spectrum: [{}]", spectrum.join(", "));
            let weights: Vec<String> = m.weights.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(out, "weights: [{}]", weights.join(", "));
            let _ = writeln!(out, "bias: {:.6}", m.bias);
            Some(filters)
        }
        "report" => {
            let r: EvalReport = parse_as(path, value)?;
            let recomputed = r.recompute_aggregates();
            let _ = writeln!(out, "config: {} [{}]", r.config.name, r.config.stage_names().join(", "));
            let _ = writeln!(out, "subjects: {}", r.subjects.join(", "));
            let _ = writeln!(out, "seed: {}  repeats: {}", r.seed, r.repeats);
            out.push_str(&aggregates_table(&recomputed));
            let state = if recomputed == r.aggregates { "consistent" } else { "STALE" };
            let _ = writeln!(out, "stored aggregates: {state}");
            None
        }
        "comparison" => {
            let c: Comparison = parse_as(path, value)?;
            out.push_str(&comparison_table(&c));
            for d in &c.deltas {
                let _ = writeln!(out, "delta {} - {}: {}", d.a, d.b, fmt_opt(d.mean));
            }
            None
        }
        "run" => {
            let r: RunManifest = parse_as(path, value)?;
            let _ = writeln!(out, "command: {}", r.args.join(" "));
            let _ = writeln!(out, "version: {}", r.version);
            let _ = writeln!(out, "duration_s: {:.3}", r.duration_s);
            None
        }
        other => return Err(unknown(path, format!("unsupported kind '{other}'"))),
    };
    Ok((out, matrix))
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let (text, matrix) = inspect(&args.path)?;
    print!("{text}");
    if let Some(csv_path) = &args.matrix_csv {
        let m = matrix.ok_or_else(|| {
            Error::InvalidArgument(format!("{} holds no matrix to export", args.path.display()))
        })?;
        write_atomic(csv_path, matrix_csv(&m).as_bytes())?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Align(a) => cmd_align(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// Exit status for a failed command.
pub fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let reason = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: {reason}");
            ExitCode::from(exit_code(&e))
        }
    }
}
