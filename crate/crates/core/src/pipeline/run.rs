//! Executes a validated configuration on source domains and one target.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{EaReference, LaParams, PipelineConfig, Stage};
use crate::alignment::{apply_coral, fit_coral, fit_ea, fit_la, LaOptions, StreamingEa, TransformRecord};
use crate::decoding::{fit_csp, fit_lda, log_variance, ModelRecord, SpatialFilterBank};
use crate::error::{Error, Result};
use crate::model::{pair_classes, ClassId, ClassPairing, DomainSet, Trial};
use crate::preprocess::{bandpass_domain, car_domain};

/// A configuration checked against the ordering rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    config: PipelineConfig,
    prefix: usize,
}

pub fn build_pipeline(config: &PipelineConfig) -> Result<Pipeline> {
    config.validate()?;
    let prefix = config.stages.iter().take_while(|s| s.is_domain_local()).count();
    Ok(Pipeline {
        config: config.clone(),
        prefix,
    })
}

/// A domain after the label-free per-domain stages that lead the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub domain: DomainSet,
    pub transforms: Vec<TransformRecord>,
}

/// Labels of the target calibration block, which is `range` in acquisition
/// order.
#[derive(Debug, Clone)]
pub struct Calibration<'a> {
    pub range: Range<usize>,
    pub labels: &'a [ClassId],
}

impl<'a> Calibration<'a> {
    pub fn new(range: Range<usize>, labels: &'a [ClassId]) -> Result<Self> {
        if range.len() != labels.len() {
            return Err(Error::shape(format!("{} calibration labels", range.len()), labels.len()));
        }
        Ok(Calibration { range, labels })
    }

    pub fn none() -> Calibration<'static> {
        Calibration { range: 0..0, labels: &[] }
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// One prediction per target trial, calibration trials included.
    pub predictions: Vec<ClassId>,
    pub decision_values: Vec<f64>,
    /// Every fitted alignment, in stage order.
    pub transforms: Vec<TransformRecord>,
    /// Filters and classifier, when the classifier reads CSP log-variances
    /// directly.
    pub model: Option<ModelRecord>,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed(RunOutcome),
    /// The configuration cannot run with this calibration set, e.g. label
    /// alignment without labelled target trials.
    Skipped(String),
}

enum Space {
    Trials {
        sources: Vec<DomainSet>,
        target: DomainSet,
    },
    Features {
        sources: Vec<DMatrix<f64>>,
        target: DMatrix<f64>,
    },
}

fn calibration_set(target: &DomainSet, calib: &Calibration) -> DomainSet {
    let trials = target.trials()[calib.range.clone()].to_vec();
    DomainSet::from_parts_unchecked(target.domain_id(), trials, Some(calib.labels.to_vec()))
}

fn source_labels(d: &DomainSet) -> Result<&[ClassId]> {
    d.labels().ok_or(Error::LabelsRequired("source domains"))
}

fn features(d: &DomainSet) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = d.trials().iter().map(|t| log_variance(t.data())).collect();
    let k = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j])
}

fn streaming_target(target: &DomainSet, calib: &Calibration) -> Result<(DomainSet, TransformRecord)> {
    let history = target.trials()[calib.range.clone()].iter();
    let mut stream = StreamingEa::with_history(1, history)?;
    let mut aligned: Vec<Option<Trial>> = vec![None; target.len()];
    if let Some(t) = stream.transform().cloned() {
        for i in calib.range.clone() {
            aligned[i] = Some(t.apply(&target.trials()[i])?);
        }
    }
    for (i, trial) in target.trials().iter().enumerate() {
        if !calib.range.contains(&i) {
            aligned[i] = Some(stream.push(trial)?);
        }
    }
    let record = TransformRecord::ea(
        target.domain_id(),
        stream.transform().ok_or(Error::EmptyState)?,
    );
    let trials = aligned.into_iter().map(|t| t.expect("every trial aligned")).collect();
    Ok((target.with_trials(trials), record))
}

fn resolve_pairing(
    params: &LaParams,
    sources: &[DomainSet],
    calib_classes: &BTreeSet<ClassId>,
) -> std::result::Result<ClassPairing, String> {
    let source_classes: BTreeSet<ClassId> = sources.iter().flat_map(|d| d.classes()).collect();
    if let Some(p) = &params.pairing {
        if let Some((_, t)) = p.iter().find(|(_, t)| !calib_classes.contains(*t)) {
            return Err(format!("target class '{t}' has no calibration trial"));
        }
        return Ok(p.clone());
    }
    if calib_classes.is_subset(&source_classes) && calib_classes.len() < source_classes.len() {
        let missing = source_classes.difference(calib_classes).next().expect("strict subset");
        return Err(format!("target class '{missing}' has no calibration trial"));
    }
    pair_classes(&source_classes, calib_classes, None).map_err(|e| e.to_string())
}

impl Pipeline {
    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Number of leading stages handled by [`Pipeline::prepare`].
    pub fn prefix_len(&self) -> usize {
        self.prefix
    }

    /// Runs the leading label-free per-domain stages. The result does not
    /// depend on which domain later plays the target.
    pub fn prepare(&self, d: &DomainSet) -> Result<Prepared> {
        let mut domain = d.clone();
        let mut transforms = Vec::new();
        for stage in &self.config.stages[..self.prefix] {
            domain = match stage {
                Stage::Bandpass(spec) => bandpass_domain(&domain, spec)?,
                Stage::Car => car_domain(&domain)?,
                Stage::Ea(_) => {
                    let t = fit_ea(&domain.with_labels(None))?;
                    transforms.push(TransformRecord::ea(domain.domain_id(), &t));
                    t.apply_domain(&domain)?
                }
                _ => unreachable!("prefix holds domain-local stages only"),
            };
        }
        Ok(Prepared { domain, transforms })
    }

    pub fn prepare_all(&self, domains: &[DomainSet]) -> Result<Vec<Prepared>> {
        domains.par_iter().map(|d| self.prepare(d)).collect()
    }

    /// Fits on labelled sources plus the target's calibration block and
    /// predicts every target trial. Target labels are never read; the
    /// target EA reference sees target trials only.
    pub fn run(&self, sources: &[&DomainSet], target: &DomainSet, calib: &Calibration) -> Result<RunStatus> {
        let sources = sources.iter().map(|d| self.prepare(d)).collect::<Result<Vec<_>>>()?;
        let target = self.prepare(target)?;
        self.run_prepared(&sources.iter().collect::<Vec<_>>(), &target, calib)
    }

    pub fn run_prepared(&self, sources: &[&Prepared], target: &Prepared, calib: &Calibration) -> Result<RunStatus> {
        if sources.is_empty() {
            return Err(Error::InvalidArgument("at least one source domain is required".into()));
        }
        if calib.range.end > target.domain.len() {
            return Err(Error::InvalidM {
                n: target.domain.len(),
                m: calib.range.end,
            });
        }
        let mut transforms: Vec<TransformRecord> = sources
            .iter()
            .flat_map(|p| p.transforms.iter().cloned())
            .chain(target.transforms.iter().cloned())
            .collect();
        let mut space = Space::Trials {
            sources: sources.iter().map(|p| p.domain.clone()).collect(),
            target: target.domain.with_labels(None),
        };
        let labels: Vec<Vec<ClassId>> = sources
            .iter()
            .map(|p| source_labels(&p.domain).map(<[ClassId]>::to_vec))
            .collect::<Result<_>>()?;
        let source_ids: Vec<String> = sources.iter().map(|p| p.domain.domain_id().to_owned()).collect();
        let target_id = target.domain.domain_id().to_owned();
        let mut bank: Option<SpatialFilterBank> = None;
        let mut direct_features = false;

        for stage in &self.config.stages[self.prefix..] {
            space = match (stage, space) {
                (Stage::Bandpass(spec), Space::Trials { sources, target }) => Space::Trials {
                    sources: sources.iter().map(|d| bandpass_domain(d, spec)).collect::<Result<_>>()?,
                    target: bandpass_domain(&target, spec)?,
                },
                (Stage::Car, Space::Trials { sources, target }) => Space::Trials {
                    sources: sources.iter().map(car_domain).collect::<Result<_>>()?,
                    target: car_domain(&target)?,
                },
                (Stage::Ea(p), Space::Trials { sources, target }) => {
                    let mut aligned = Vec::with_capacity(sources.len());
                    for d in &sources {
                        let t = fit_ea(&d.with_labels(None))?;
                        transforms.push(TransformRecord::ea(d.domain_id(), &t));
                        aligned.push(t.apply_domain(d)?);
                    }
                    let target = match p.reference {
                        EaReference::AllTarget => {
                            let t = fit_ea(&target)?;
                            transforms.push(TransformRecord::ea(target.domain_id(), &t));
                            t.apply_domain(&target)?
                        }
                        EaReference::Calibration => {
                            let (aligned, record) = streaming_target(&target, calib)?;
                            transforms.push(record);
                            aligned
                        }
                    };
                    direct_features = false;
                    Space::Trials { sources: aligned, target }
                }
                (Stage::La(p), Space::Trials { sources, target }) => {
                    if calib.is_empty() {
                        return Ok(RunStatus::Skipped("la needs labelled target calibration trials".into()));
                    }
                    let calib_set = calibration_set(&target, calib);
                    let pairing = match resolve_pairing(p, &sources, &calib_set.classes()) {
                        Ok(pairing) => pairing,
                        Err(reason) => return Ok(RunStatus::Skipped(reason)),
                    };
                    let options = LaOptions {
                        estimator: p.estimator,
                        target_shrinkage: p.target_shrinkage,
                    };
                    let mut aligned = Vec::with_capacity(sources.len());
                    for d in &sources {
                        let sub = ClassPairing::new(
                            pairing
                                .iter()
                                .filter(|(s, _)| d.classes().contains(*s))
                                .map(|(s, t)| (s.clone(), t.clone()))
                                .collect(),
                        )?;
                        let t = fit_la(d, &calib_set, &sub, &options)?;
                        transforms.push(TransformRecord::la(d.domain_id(), target.domain_id(), &t));
                        aligned.push(t.apply_domain(d)?);
                    }
                    direct_features = false;
                    Space::Trials { sources: aligned, target }
                }
                (Stage::Csp(p), Space::Trials { sources, target }) => {
                    let mut classes: BTreeSet<&ClassId> = labels.iter().flatten().collect();
                    classes.extend(calib.labels);
                    let classes: Vec<&ClassId> = classes.into_iter().collect();
                    if classes.len() != 2 {
                        return Err(Error::InvalidArgument(format!(
                            "csp is binary, got {} classes",
                            classes.len()
                        )));
                    }
                    let (ca, cb) = (classes[0].clone(), classes[1].clone());
                    let mut a: Vec<&Trial> = Vec::new();
                    let mut b: Vec<&Trial> = Vec::new();
                    let calib_trials = target.trials()[calib.range.clone()].iter().zip(calib.labels);
                    let source_trials = sources
                        .iter()
                        .zip(&labels)
                        .flat_map(|(d, l)| d.trials().iter().zip(l.iter()));
                    for (t, l) in source_trials.chain(calib_trials) {
                        if *l == ca {
                            a.push(t);
                        } else {
                            b.push(t);
                        }
                    }
                    let fitted = fit_csp(&a, &b, p.n_per_side, p.gamma, (ca, cb))?;
                    let filter = |d: &DomainSet| -> Result<DomainSet> {
                        Ok(d.with_trials(d.trials().iter().map(|t| fitted.apply(t)).collect::<Result<_>>()?))
                    };
                    let next = Space::Trials {
                        sources: sources.iter().map(filter).collect::<Result<_>>()?,
                        target: filter(&target)?,
                    };
                    bank = Some(fitted);
                    direct_features = true;
                    next
                }
                (Stage::Logvar, Space::Trials { sources, target }) => Space::Features {
                    sources: sources.iter().map(features).collect(),
                    target: features(&target),
                },
                (Stage::Coral, Space::Features { sources, target }) => {
                    let mut moved = Vec::with_capacity(sources.len());
                    for (f, id) in sources.iter().zip(&source_ids) {
                        let t = fit_coral(f, &target)?;
                        transforms.push(TransformRecord::coral(id, &target_id, &t));
                        moved.push(apply_coral(&t, f)?);
                    }
                    direct_features = false;
                    Space::Features { sources: moved, target }
                }
                (Stage::WeightedLda(p), Space::Features { sources, target }) => {
                    let k = target.ncols();
                    let n_src: usize = sources.iter().map(DMatrix::nrows).sum();
                    let n = n_src + calib.len();
                    let mut x = DMatrix::zeros(n, k);
                    let mut y = Vec::with_capacity(n);
                    let mut w = Vec::with_capacity(n);
                    let mut r = 0;
                    for (f, l) in sources.iter().zip(&labels) {
                        x.rows_mut(r, f.nrows()).copy_from(f);
                        r += f.nrows();
                        y.extend(l.iter().cloned());
                        w.extend(std::iter::repeat_n(1.0, f.nrows()));
                    }
                    for (i, idx) in calib.range.clone().enumerate() {
                        x.row_mut(r + i).copy_from(&target.row(idx));
                        y.push(calib.labels[i].clone());
                        w.push(p.target_weight);
                    }
                    let clf = fit_lda(&x, &y, Some(&w), p.shrinkage)?;
                    let mut predictions = Vec::with_capacity(target.nrows());
                    let mut decision_values = Vec::with_capacity(target.nrows());
                    for row in target.row_iter() {
                        let v: Vec<f64> = row.iter().copied().collect();
                        decision_values.push(clf.decision_value(&v)?);
                        predictions.push(clf.predict(&v)?.clone());
                    }
                    let model = match (&bank, direct_features) {
                        (Some(b), true) => Some(ModelRecord::new(b, &clf)?),
                        _ => None,
                    };
                    return Ok(RunStatus::Completed(RunOutcome {
                        predictions,
                        decision_values,
                        transforms,
                        model,
                    }));
                }
                (stage, _) => {
                    return Err(Error::InvalidConfig(format!(
                        "stage '{}' received the wrong kind of input",
                        stage.name()
                    )))
                }
            };
        }
        Err(Error::InvalidConfig("pipeline has no classifier stage".into()))
    }
}
