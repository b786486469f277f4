//! Leave-one-subject-out evaluation with contiguous calibration blocks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::run::{build_pipeline, Calibration, Pipeline, Prepared, RunStatus};
use crate::error::{Error, Result};
use crate::model::DomainSet;

/// Default calibration sizes: 0 to 20 in steps of 4.
pub const DEFAULT_M_VALUES: &[usize] = &[0, 4, 8, 12, 16, 20];
pub const DEFAULT_REPEATS: usize = 30;

/// Uniformly placed block `[s, s + m)` with `s ∈ [0, n − m]`.
pub fn select_calibration_block(n: usize, m: usize, rng: &mut impl Rng) -> Result<Range<usize>> {
    if m > n {
        return Err(Error::InvalidM { n, m });
    }
    if m == 0 {
        return Ok(0..0);
    }
    let start = rng.random_range(0..=n - m);
    Ok(start..start + m)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// Seed of the `(subject, m, repeat)` substream. It depends only on these
/// names and the master seed, so adding subjects, sizes or configurations
/// never moves an existing draw.
pub fn cell_seed(master: u64, subject: &str, m: usize, repeat: usize) -> u64 {
    [fnv1a(subject), m as u64, repeat as u64]
        .into_iter()
        .fold(splitmix(master), |acc, k| splitmix(acc ^ splitmix(k)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub m_values: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    /// Worker cap; `None` uses the global pool.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            m_values: DEFAULT_M_VALUES.to_vec(),
            repeats: DEFAULT_REPEATS,
            seed: 42,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subject: String,
    pub m: usize,
    pub repeat: usize,
    pub calibration_start: usize,
    pub n_scored: usize,
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 for a single run.
    pub std: Option<f64>,
    pub n_runs: usize,
    pub n_skipped: usize,
}

impl Summary {
    fn of<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Summary {
        let mut values = Vec::new();
        let mut n_skipped = 0;
        for r in records {
            match r.accuracy {
                Some(a) => values.push(a),
                None => n_skipped += 1,
            }
        }
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: None,
                std: None,
                n_runs: 0,
                n_skipped,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary {
            mean: Some(mean),
            std: Some(std),
            n_runs: n,
            n_skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: String,
    pub m: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallSummary {
    pub m: usize,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub per_subject: Vec<SubjectSummary>,
    /// Over every subject and repeat at each calibration size.
    pub overall: Vec<OverallSummary>,
}

impl Aggregates {
    pub fn from_records(records: &[RunRecord], subjects: &[String], m_values: &[usize]) -> Aggregates {
        let mut per_subject = Vec::new();
        for s in subjects {
            for &m in m_values {
                per_subject.push(SubjectSummary {
                    subject: s.clone(),
                    m,
                    summary: Summary::of(records.iter().filter(|r| &r.subject == s && r.m == m)),
                });
            }
        }
        let overall = m_values
            .iter()
            .map(|&m| OverallSummary {
                m,
                summary: Summary::of(records.iter().filter(|r| r.m == m)),
            })
            .collect();
        Aggregates { per_subject, overall }
    }

    pub fn overall_mean(&self, m: usize) -> Option<f64> {
        self.overall.iter().find(|o| o.m == m).and_then(|o| o.summary.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "report")]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub seed: u64,
    pub m_values: Vec<usize>,
    pub repeats: usize,
    pub subjects: Vec<String>,
    pub records: Vec<RunRecord>,
    pub aggregates: Aggregates,
}

impl EvalReport {
    pub fn recompute_aggregates(&self) -> Aggregates {
        Aggregates::from_records(&self.records, &self.subjects, &self.m_values)
    }

    /// Mean accuracy over the whole sweep, skipped runs excluded.
    pub fn mean_accuracy(&self) -> Option<f64> {
        Summary::of(&self.records).mean
    }

    /// `subject,m,repeat,accuracy`, one line per run; skipped runs have an
    /// empty accuracy.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject,m,repeat,accuracy\n");
        for r in &self.records {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.subject, r.m, r.repeat, acc);
        }
        out
    }
}

struct Cell {
    target: usize,
    m: usize,
    repeat: usize,
}

fn check_inputs(domains: &[DomainSet], settings: &EvalSettings) -> Result<()> {
    if domains.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-subject-out needs at least 2 domains, got {}",
            domains.len()
        )));
    }
    if settings.m_values.is_empty() || settings.repeats == 0 {
        return Err(Error::InvalidArgument("need at least one calibration size and one repeat".into()));
    }
    let mut ids = std::collections::BTreeSet::new();
    for d in domains {
        if d.labels().is_none() {
            return Err(Error::LabelsRequired("leave-one-subject-out evaluation"));
        }
        if !ids.insert(d.domain_id()) {
            return Err(Error::InvalidArgument(format!("duplicate domain id '{}'", d.domain_id())));
        }
        for &m in &settings.m_values {
            if m >= d.len() {
                return Err(Error::InvalidM { n: d.len(), m });
            }
        }
    }
    Ok(())
}

fn run_cell(pipeline: &Pipeline, prepared: &[Prepared], domains: &[DomainSet], cell: &Cell, seed: u64) -> Result<RunRecord> {
    let target = &domains[cell.target];
    let subject = target.domain_id().to_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, &subject, cell.m, cell.repeat));
    let block = select_calibration_block(target.len(), cell.m, &mut rng)?;
    let labels = target.labels().expect("checked labelled");
    let calib = Calibration::new(block.clone(), &labels[block.clone()])?;
    let sources: Vec<&Prepared> = prepared
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != cell.target)
        .map(|(_, p)| p)
        .collect();
    let scored: Vec<usize> = (0..target.len()).filter(|i| !block.contains(i)).collect();
    let mut record = RunRecord {
        subject,
        m: cell.m,
        repeat: cell.repeat,
        calibration_start: block.start,
        n_scored: scored.len(),
        accuracy: None,
        skipped: None,
    };
    match pipeline.run_prepared(&sources, &prepared[cell.target], &calib)? {
        RunStatus::Completed(out) => {
            let hits = scored.iter().filter(|&&i| out.predictions[i] == labels[i]).count();
            record.accuracy = Some(hits as f64 / scored.len() as f64);
        }
        RunStatus::Skipped(reason) => record.skipped = Some(reason),
    }
    Ok(record)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn evaluate_prepared(
    pipeline: &Pipeline,
    prepared: &[Prepared],
    domains: &[DomainSet],
    settings: &EvalSettings,
) -> Result<EvalReport> {
    let cells: Vec<Cell> = (0..domains.len())
        .flat_map(|target| {
            settings.m_values.iter().flat_map(move |&m| {
                (0..settings.repeats).map(move |repeat| Cell { target, m, repeat })
            })
        })
        .collect();
    let records = cells
        .par_iter()
        .map(|cell| {
            run_cell(pipeline, prepared, domains, cell, settings.seed).map_err(|e| Error::Run {
                subject: domains[cell.target].domain_id().to_owned(),
                m: cell.m,
                repeat: cell.repeat,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let subjects: Vec<String> = domains.iter().map(|d| d.domain_id().to_owned()).collect();
    let aggregates = Aggregates::from_records(&records, &subjects, &settings.m_values);
    Ok(EvalReport {
        config: pipeline.config().clone(),
        seed: settings.seed,
        m_values: settings.m_values.clone(),
        repeats: settings.repeats,
        subjects,
        records,
        aggregates,
    })
}

/// Each domain in turn is the target; all others are sources. Cells run in
/// parallel and are reduced in `(subject, m, repeat)` order, so the report
/// is identical for any thread count.
pub fn loso_evaluate(domains: &[DomainSet], config: &PipelineConfig, settings: &EvalSettings) -> Result<EvalReport> {
    check_inputs(domains, settings)?;
    let pipeline = build_pipeline(config)?;
    with_threads(settings.threads, || {
        let prepared = pipeline.prepare_all(domains)?;
        evaluate_prepared(&pipeline, &prepared, domains, settings)
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub config: String,
    /// Overall mean accuracy per calibration size.
    pub means: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub a: String,
    pub b: String,
    /// `a − b` per calibration size.
    pub per_m: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "comparison")]
pub struct Comparison {
    pub m_values: Vec<usize>,
    pub rows: Vec<ComparisonRow>,
    pub deltas: Vec<Delta>,
    pub reports: Vec<EvalReport>,
}

impl Comparison {
    pub fn row(&self, config: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.config == config)
    }

    pub fn delta(&self, a: &str, b: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| d.a == a && d.b == b)
    }

    /// `config,m,mean` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,m,mean_accuracy\n");
        for row in &self.rows {
            for (m, v) in self.m_values.iter().zip(&row.means) {
                let v = v.map(|a| a.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{}", row.config, m, v);
            }
        }
        out
    }
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Runs every configuration on the same `(subject, m, repeat)` calibration
/// draws and tabulates overall means and pairwise differences.
pub fn compare_configs(
    domains: &[DomainSet],
    configs: &[PipelineConfig],
    settings: &EvalSettings,
) -> Result<Comparison> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("no configurations to compare".into()));
    }
    let mut names = BTreeMap::new();
    for c in configs {
        if names.insert(c.name.as_str(), ()).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate configuration name '{}'", c.name)));
        }
    }
    check_inputs(domains, settings)?;
    let reports = with_threads(settings.threads, || {
        configs
            .iter()
            .map(|c| {
                let pipeline = build_pipeline(c)?;
                let prepared = pipeline.prepare_all(domains)?;
                evaluate_prepared(&pipeline, &prepared, domains, settings)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            config: r.config.name.clone(),
            means: settings.m_values.iter().map(|&m| r.aggregates.overall_mean(m)).collect(),
            mean: r.mean_accuracy(),
        })
        .collect();
    let mut deltas = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            deltas.push(Delta {
                a: a.config.clone(),
                b: b.config.clone(),
                per_m: a.means.iter().zip(&b.means).map(|(x, y)| diff(*x, *y)).collect(),
                mean: diff(a.mean, b.mean),
            });
        }
    }
    Ok(Comparison {
        m_values: settings.m_values.clone(),
        rows,
        deltas,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClassId;
    use crate::synth::{generate, GeneratorSpec};
    use rand::seq::SliceRandom;

    fn domains(n_subjects: usize, trials_per_class: usize, seed: u64) -> Vec<DomainSet> {
        let spec = GeneratorSpec {
            n_subjects,
            channels: 6,
            samples: 128,
            trials_per_class,
            seed,
            ..GeneratorSpec::default()
        };
        generate(&spec).unwrap().0
    }

    fn settings(m_values: &[usize], repeats: usize) -> EvalSettings {
        EvalSettings {
            m_values: m_values.to_vec(),
            repeats,
            ..EvalSettings::default()
        }
    }

    fn preset(name: &str) -> PipelineConfig {
        PipelineConfig::preset(name).unwrap()
    }

    #[test]
    fn block_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_calibration_block(100, 0, &mut rng).unwrap(), 0..0);
        assert_eq!(select_calibration_block(10, 10, &mut rng).unwrap(), 0..10);
        assert!(matches!(select_calibration_block(5, 6, &mut rng), Err(Error::InvalidM { n: 5, m: 6 })));
        for _ in 0..200 {
            let r = select_calibration_block(30, 7, &mut rng).unwrap();
            assert_eq!(r.len(), 7);
            assert!(r.end <= 30);
        }
    }

    #[test]
    fn block_start_is_uniform() {
        let (n, m, draws) = (100usize, 20usize, 10_000usize);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = vec![0usize; n - m + 1];
        for _ in 0..draws {
            counts[select_calibration_block(n, m, &mut rng).unwrap().start] += 1;
        }
        let expected = draws as f64 / counts.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 80 degrees of freedom; the 0.999 quantile is about 124.8.
        assert!(chi2 < 124.8, "chi2 = {chi2}");
    }

    #[test]
    fn cell_seeds_separate_cells() {
        let base = cell_seed(42, "S01", 4, 0);
        assert_eq!(base, cell_seed(42, "S01", 4, 0));
        for other in [
            cell_seed(43, "S01", 4, 0),
            cell_seed(42, "S02", 4, 0),
            cell_seed(42, "S01", 8, 0),
            cell_seed(42, "S01", 4, 1),
            cell_seed(42, "S01", 0, 4),
        ] {
            assert_ne!(base, other);
        }
    }

    #[test]
    fn calibration_never_scored() {
        let ds = domains(3, 12, 1);
        let report = loso_evaluate(&ds, &preset("tf-ea-rcsp"), &settings(&[0, 5, 10], 4)).unwrap();
        assert_eq!(report.records.len(), 3 * 3 * 4);
        for r in &report.records {
            assert_eq!(r.n_scored, 24 - r.m);
            assert!(r.calibration_start + r.m <= 24);
            let a = r.accuracy.unwrap();
            assert!((0.0..=1.0).contains(&a));
            // Accuracy is a count over the scored trials.
            let hits = a * r.n_scored as f64;
            assert!((hits - hits.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn reports_are_deterministic_across_reruns_and_threads() {
        let ds = domains(3, 12, 2);
        let mut s = settings(&[0, 4], 3);
        let a = loso_evaluate(&ds, &preset("tf-car-ea-rcsp"), &s).unwrap();
        let b = loso_evaluate(&ds, &preset("tf-car-ea-rcsp"), &s).unwrap();
        s.threads = Some(1);
        let serial = loso_evaluate(&ds, &preset("tf-car-ea-rcsp"), &s).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        assert_eq!(ja, serde_json::to_string(&b).unwrap());
        assert_eq!(ja, serde_json::to_string(&serial).unwrap());
    }

    #[test]
    fn seed_moves_calibration_blocks() {
        let ds = domains(3, 12, 2);
        let mut s = settings(&[8], 5);
        let a = loso_evaluate(&ds, &preset("tf-rcsp"), &s).unwrap();
        s.seed = 7;
        let b = loso_evaluate(&ds, &preset("tf-rcsp"), &s).unwrap();
        let starts = |r: &EvalReport| r.records.iter().map(|x| x.calibration_start).collect::<Vec<_>>();
        assert_ne!(starts(&a), starts(&b));
    }

    #[test]
    fn shuffled_labels_give_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ds: Vec<DomainSet> = domains(6, 30, 3)
            .into_iter()
            .map(|d| {
                let mut labels = d.labels().unwrap().to_vec();
                labels.shuffle(&mut rng);
                d.with_labels(Some(labels))
            })
            .collect();
        let report = loso_evaluate(&ds, &preset("tf-ea-rcsp"), &settings(&[8, 16], 30)).unwrap();
        let mean = report.mean_accuracy().unwrap();
        assert!((0.4..=0.6).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn identical_domains_transfer_perfectly() {
        let d = domains(1, 40, 4).remove(0);
        let copy = DomainSet::new("copy", d.trials().to_vec(), d.labels().map(<[ClassId]>::to_vec)).unwrap();
        let report = loso_evaluate(&[d, copy], &preset("tf-rcsp"), &settings(&[0], 1)).unwrap();
        for r in &report.records {
            assert!(r.accuracy.unwrap() > 0.95, "{r:?}");
        }
    }

    #[test]
    fn aggregates_match_records() {
        let ds = domains(3, 12, 5);
        let report = loso_evaluate(&ds, &preset("tf-rcsp"), &settings(&[0, 6], 4)).unwrap();
        assert_eq!(report.aggregates, report.recompute_aggregates());
        for &m in &[0, 6] {
            let xs: Vec<f64> = report.records.iter().filter(|r| r.m == m).filter_map(|r| r.accuracy).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((report.aggregates.overall_mean(m).unwrap() - mean).abs() < 1e-12);
        }
        let s01 = report
            .aggregates
            .per_subject
            .iter()
            .find(|s| s.subject == "S01" && s.m == 0)
            .unwrap();
        // Every repeat at m=0 uses the same (empty) block.
        assert_eq!(s01.summary.n_runs, 4);
        assert!(s01.summary.std.unwrap() < 1e-12);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + report.records.len());
        assert!(csv.starts_with("subject,m,repeat,accuracy\n"));
    }

    #[test]
    fn skipped_runs_are_counted_not_scored() {
        let ds = domains(3, 12, 6);
        let report = loso_evaluate(&ds, &preset("tf-la-rcsp"), &settings(&[0, 12], 2)).unwrap();
        let at0 = report.aggregates.overall.iter().find(|o| o.m == 0).unwrap();
        assert_eq!(at0.summary.n_runs, 0);
        assert_eq!(at0.summary.n_skipped, 6);
        assert!(at0.summary.mean.is_none());
        assert!(report.records.iter().filter(|r| r.m == 0).all(|r| r.skipped.is_some()));
        let csv = report.to_csv();
        assert!(csv.contains("S01,0,0,\n"));
    }

    #[test]
    fn single_config_comparison_matches_report() {
        let ds = domains(3, 12, 7);
        let s = settings(&[0, 4], 2);
        let report = loso_evaluate(&ds, &preset("tf-ea-rcsp"), &s).unwrap();
        let cmp = compare_configs(&ds, &[preset("tf-ea-rcsp")], &s).unwrap();
        assert_eq!(cmp.reports[0], report);
        let row = cmp.row("tf-ea-rcsp").unwrap();
        assert_eq!(row.means[1], report.aggregates.overall_mean(4));
        assert!(cmp.deltas.is_empty());
    }

    #[test]
    fn comparison_deltas_are_differences() {
        let ds = domains(3, 12, 8);
        let cmp = compare_configs(&ds, &[preset("tf-ea-rcsp"), preset("tf-rcsp")], &settings(&[0, 4], 2)).unwrap();
        let d = cmp.delta("tf-ea-rcsp", "tf-rcsp").unwrap();
        let (a, b) = (cmp.row("tf-ea-rcsp").unwrap(), cmp.row("tf-rcsp").unwrap());
        for i in 0..2 {
            assert_eq!(d.per_m[i], Some(a.means[i].unwrap() - b.means[i].unwrap()));
        }
        assert_eq!(cmp.to_csv().lines().count(), 1 + 4);
        let dup = compare_configs(&ds, &[preset("tf-rcsp"), preset("tf-rcsp")], &settings(&[0], 1));
        assert!(dup.is_err());
    }

    #[test]
    fn input_errors() {
        let ds = domains(2, 6, 9);
        let cfg = preset("tf-rcsp");
        assert!(loso_evaluate(&ds[..1], &cfg, &settings(&[0], 1)).is_err());
        let err = loso_evaluate(&ds, &cfg, &settings(&[12], 1)).unwrap_err();
        assert!(matches!(err, Error::InvalidM { n: 12, m: 12 }));
        let blind = vec![ds[0].clone(), ds[1].with_labels(None)];
        assert!(matches!(
            loso_evaluate(&blind, &cfg, &settings(&[0], 1)),
            Err(Error::LabelsRequired(_))
        ));
        let twins = vec![ds[0].clone(), ds[0].clone()];
        assert!(loso_evaluate(&twins, &cfg, &settings(&[0], 1)).is_err());
        assert!(loso_evaluate(&ds, &cfg, &settings(&[], 1)).is_err());
        assert!(loso_evaluate(&ds, &cfg, &settings(&[0], 0)).is_err());
        let dup = PipelineConfig::new("dup", vec![crate::pipeline::Stage::Ea(Default::default()); 2]);
        assert!(matches!(dup, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn cell_failures_name_the_cell() {
        let spec = GeneratorSpec {
            n_subjects: 2,
            channels: 6,
            samples: 128,
            trials_per_class: 6,
            classes: vec!["a".into(), "b".into(), "c".into()],
            ..GeneratorSpec::default()
        };
        let ds = generate(&spec).unwrap().0;
        let err = loso_evaluate(&ds, &preset("tf-rcsp"), &settings(&[0], 1)).unwrap_err();
        match &err {
            Error::Run { subject, m, repeat, source } => {
                assert_eq!((subject.as_str(), *m, *repeat), ("S01", 0, 0));
                assert!(source.to_string().contains("binary"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.is_validation());
    }
}
