//! Label alignment: each source class is mapped onto the covariance geometry
//! of its paired target class with `R̄ₜ^{1/2} R̄ₛ^{-1/2}`. Only source trials
//! are transformed.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassId, ClassPairing, DomainSet, Trial};
use crate::spd::{mean_covariance, MeanEstimator, SpdMatrix};

/// Default shrinkage of the target class references, which are usually
/// estimated from a handful of calibration trials.
pub const DEFAULT_TARGET_SHRINKAGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaOptions {
    #[serde(default)]
    pub estimator: MeanEstimator,
    #[serde(default = "default_target_shrinkage")]
    pub target_shrinkage: f64,
}

fn default_target_shrinkage() -> f64 {
    DEFAULT_TARGET_SHRINKAGE
}

impl Default for LaOptions {
    fn default() -> Self {
        LaOptions {
            estimator: MeanEstimator::Euclidean,
            target_shrinkage: DEFAULT_TARGET_SHRINKAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaTransform {
    per_class: BTreeMap<ClassId, DMatrix<f64>>,
    target_references: BTreeMap<ClassId, SpdMatrix>,
    pairing: ClassPairing,
}

impl LaTransform {
    pub fn pairing(&self) -> &ClassPairing {
        &self.pairing
    }

    /// Transformation matrix of a source class.
    pub fn map(&self, source_class: &ClassId) -> Option<&DMatrix<f64>> {
        self.per_class.get(source_class)
    }

    pub fn maps(&self) -> impl Iterator<Item = (&ClassId, &DMatrix<f64>)> {
        self.per_class.iter()
    }

    /// Reference the source class is mapped onto, keyed by source class.
    pub fn target_reference(&self, source_class: &ClassId) -> Option<&SpdMatrix> {
        self.target_references.get(source_class)
    }

    pub fn channels(&self) -> usize {
        self.per_class.values().next().map_or(0, DMatrix::nrows)
    }

    pub fn apply(&self, trial: &Trial, source_class: &ClassId) -> Result<Trial> {
        apply_la(self, trial, source_class)
    }

    /// Transforms every trial of a labelled source domain by its class.
    pub fn apply_domain(&self, source: &DomainSet) -> Result<DomainSet> {
        let labels = source.labels().ok_or(Error::LabelsRequired("LA"))?;
        let trials = source
            .trials()
            .iter()
            .zip(labels)
            .map(|(t, l)| apply_la(self, t, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(source.with_trials(trials))
    }
}

fn class_mean(d: &DomainSet, class: &ClassId, estimator: MeanEstimator, shrinkage: f64) -> Result<SpdMatrix> {
    let trials: Vec<&Trial> = d.trials_of_class(class).collect();
    if trials.is_empty() {
        return Err(Error::MissingClass(class.clone()));
    }
    mean_covariance(trials, estimator, shrinkage)
}

/// Source references are unshrunk so the aligned source class mean lands
/// exactly on the target reference.
pub fn fit_la(
    source: &DomainSet,
    target: &DomainSet,
    pairing: &ClassPairing,
    options: &LaOptions,
) -> Result<LaTransform> {
    if source.labels().is_none() || target.labels().is_none() {
        return Err(Error::LabelsRequired("LA"));
    }
    if source.channels() != target.channels() {
        return Err(Error::shape(
            format!("{} channels", source.channels()),
            format!("{} channels", target.channels()),
        ));
    }
    let mut per_class = BTreeMap::new();
    let mut target_references = BTreeMap::new();
    for (s_class, t_class) in pairing.iter() {
        let r_s = class_mean(source, s_class, options.estimator, 0.0)?;
        let r_t = class_mean(target, t_class, options.estimator, options.target_shrinkage)?;
        per_class.insert(s_class.clone(), r_t.sqrt() * r_s.invsqrt());
        target_references.insert(s_class.clone(), r_t);
    }
    Ok(LaTransform {
        per_class,
        target_references,
        pairing: pairing.clone(),
    })
}

pub fn apply_la(t: &LaTransform, trial: &Trial, source_class: &ClassId) -> Result<Trial> {
    let map = t
        .per_class
        .get(source_class)
        .ok_or_else(|| Error::UnknownClass(source_class.clone()))?;
    if map.ncols() != trial.channels() {
        return Err(Error::shape(
            format!("{} channels", map.ncols()),
            format!("{} channels", trial.channels()),
        ));
    }
    Ok(trial.with_data(map * trial.data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::{raw_mean_covariance, relative_frobenius};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labelled(seed: u64, classes: &[(&str, f64)], per_class: usize, c: usize) -> DomainSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trials = Vec::new();
        let mut labels = Vec::new();
        for (k, (name, gain)) in classes.iter().enumerate() {
            let mix = DMatrix::from_fn(c, c, |i, j| {
                let base = if i == j { *gain } else { 0.0 };
                base + 0.3 * rng.random_range(-1.0..1.0) * (k + 1) as f64
            });
            for _ in 0..per_class {
                let s = DMatrix::from_fn(c, 40, |_, _| rng.random_range(-1.0..1.0));
                trials.push(Trial::new(&mix * s, 100.0).unwrap());
                labels.push(ClassId::from(*name));
            }
        }
        DomainSet::new(format!("d{seed}"), trials, Some(labels)).unwrap()
    }

    fn exact() -> LaOptions {
        LaOptions {
            target_shrinkage: 0.0,
            ..LaOptions::default()
        }
    }

    #[test]
    fn same_domain_gives_identity_maps() {
        let d = labelled(1, &[("left", 1.0), ("right", 2.0)], 15, 4);
        let p = ClassPairing::identity(&d.classes());
        let t = fit_la(&d, &d, &p, &exact()).unwrap();
        for (_, m) in t.maps() {
            assert!((m - DMatrix::identity(4, 4)).norm() < 1e-9);
        }
    }

    #[test]
    fn scaled_diagonal_target_gives_twice_identity() {
        let c = |v: f64| {
            Trial::new(DMatrix::from_row_slice(2, 2, &[v, 0.0, 0.0, v]), 100.0).unwrap()
        };
        let src = DomainSet::new("s", vec![c(1.0), c(3.0)], Some(vec!["a".into(), "b".into()])).unwrap();
        let tgt = DomainSet::new("t", vec![c(2.0), c(6.0)], Some(vec!["a".into(), "b".into()])).unwrap();
        let t = fit_la(&src, &tgt, &ClassPairing::identity(&src.classes()), &exact()).unwrap();
        for (_, m) in t.maps() {
            assert!((m - DMatrix::identity(2, 2) * 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn classes_get_different_maps() {
        let src = labelled(2, &[("left", 1.0), ("right", 3.0)], 12, 4);
        let tgt = labelled(3, &[("left", 2.0), ("right", 0.5)], 12, 4);
        let t = fit_la(&src, &tgt, &ClassPairing::identity(&src.classes()), &LaOptions::default()).unwrap();
        let a = t.map(&"left".into()).unwrap();
        let b = t.map(&"right".into()).unwrap();
        assert!((a - b).norm() > 0.0);
    }

    #[test]
    fn aligned_source_class_matches_target_class() {
        let src = labelled(4, &[("right", 1.0), ("feet", 2.5)], 20, 5);
        let tgt = labelled(5, &[("left", 0.7), ("tongue", 1.8)], 8, 5);
        let pairing = ClassPairing::from_pairs([("right", "left"), ("feet", "tongue")]).unwrap();
        let t = fit_la(&src, &tgt, &pairing, &exact()).unwrap();
        let aligned = t.apply_domain(&src).unwrap();
        for (s, tc) in pairing.iter() {
            let got = raw_mean_covariance(aligned.trials_of_class(s)).unwrap();
            let want = raw_mean_covariance(tgt.trials_of_class(tc)).unwrap();
            assert!(relative_frobenius(&got, &want) < 1e-8);
        }
    }

    #[test]
    fn shrunk_target_reference_is_what_gets_matched() {
        let src = labelled(6, &[("a", 1.0), ("b", 2.0)], 10, 3);
        let tgt = labelled(7, &[("a", 2.0), ("b", 1.0)], 3, 3);
        let t = fit_la(&src, &tgt, &ClassPairing::identity(&src.classes()), &LaOptions::default()).unwrap();
        let aligned = t.apply_domain(&src).unwrap();
        let a = ClassId::from("a");
        let got = raw_mean_covariance(aligned.trials_of_class(&a)).unwrap();
        assert!(relative_frobenius(&got, t.target_reference(&a).unwrap().values()) < 1e-8);
    }

    #[test]
    fn errors() {
        let src = labelled(8, &[("a", 1.0), ("b", 2.0)], 4, 3);
        let tgt = labelled(9, &[("a", 1.0)], 4, 3);
        let p = ClassPairing::identity(&src.classes());
        assert!(matches!(fit_la(&src, &tgt, &p, &exact()), Err(Error::MissingClass(c)) if c.as_str() == "b"));
        let unlabelled = src.with_labels(None);
        assert!(matches!(fit_la(&unlabelled, &tgt, &p, &exact()), Err(Error::LabelsRequired(_))));
        let t = fit_la(&src, &src, &p, &exact()).unwrap();
        assert!(matches!(
            apply_la(&t, &src.trials()[0], &"zzz".into()),
            Err(Error::UnknownClass(_))
        ));
        let other = labelled(10, &[("a", 1.0), ("b", 2.0)], 4, 4);
        assert!(matches!(fit_la(&src, &other, &p, &exact()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn identity_map_leaves_trial_unchanged() {
        let d = labelled(11, &[("a", 1.0), ("b", 2.0)], 6, 3);
        let t = fit_la(&d, &d, &ClassPairing::identity(&d.classes()), &exact()).unwrap();
        let out = apply_la(&t, &d.trials()[0], &"a".into()).unwrap();
        assert!((out.data() - d.trials()[0].data()).norm() < 1e-9 * d.trials()[0].data().norm());
    }
}
