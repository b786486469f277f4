//! Domain data types shared by every stage: trials, domains and class pairings.
//!
//! Channel correspondence across domains is the caller's responsibility. The
//! library only checks that channel counts agree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque class identifier such as `"left"` or `"feet"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(String);

impl ClassId {
    pub fn new(id: impl Into<String>) -> Self {
        ClassId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassId {
    fn from(s: &str) -> Self {
        ClassId(s.to_owned())
    }
}

impl From<String> for ClassId {
    fn from(s: String) -> Self {
        ClassId(s)
    }
}

/// One epoch of multichannel signal: `channels × samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    data: DMatrix<f64>,
    sampling_rate: f64,
    channel_names: Option<Vec<String>>,
}

impl Trial {
    /// Builds a trial. Finiteness is not checked here; see [`validate_domain`].
    pub fn new(data: DMatrix<f64>, sampling_rate: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "trial must have at least one channel and one sample, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sampling rate must be positive, got {sampling_rate}"
            )));
        }
        Ok(Trial {
            data,
            sampling_rate,
            channel_names: None,
        })
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.channels() {
            return Err(Error::shape(
                format!("{} channel names", self.channels()),
                names.len(),
            ));
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.channel_names.as_deref()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fewer samples than channels: the trial covariance cannot be full rank.
    pub fn is_rank_deficient(&self) -> bool {
        self.samples() < self.channels()
    }

    /// Same metadata, new data. Channel names are dropped when the channel
    /// count changes.
    pub fn with_data(&self, data: DMatrix<f64>) -> Trial {
        let channel_names = match &self.channel_names {
            Some(n) if n.len() == data.nrows() => Some(n.clone()),
            _ => None,
        };
        Trial {
            data,
            sampling_rate: self.sampling_rate,
            channel_names,
        }
    }

    pub(crate) fn with_data_and_rate(&self, data: DMatrix<f64>, sampling_rate: f64) -> Trial {
        let mut t = self.with_data(data);
        t.sampling_rate = sampling_rate;
        t
    }
}

/// One subject's or session's trials, kept in acquisition order.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSet {
    domain_id: String,
    trials: Vec<Trial>,
    labels: Option<Vec<ClassId>>,
}

impl DomainSet {
    /// Builds a domain and rejects it if any invariant fails.
    pub fn new(
        domain_id: impl Into<String>,
        trials: Vec<Trial>,
        labels: Option<Vec<ClassId>>,
    ) -> Result<Self> {
        let d = Self::from_parts_unchecked(domain_id, trials, labels);
        let violations = validate_domain(&d);
        if violations.is_empty() {
            Ok(d)
        } else {
            Err(Error::InvalidDomain {
                domain_id: d.domain_id,
                violations,
            })
        }
    }

    /// Builds a domain without checking invariants, for diagnostics and loaders
    /// that report violations themselves.
    pub fn from_parts_unchecked(
        domain_id: impl Into<String>,
        trials: Vec<Trial>,
        labels: Option<Vec<ClassId>>,
    ) -> Self {
        DomainSet {
            domain_id: domain_id.into(),
            trials,
            labels,
        }
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.trials.first().map_or(0, Trial::channels)
    }

    pub fn samples(&self) -> usize {
        self.trials.first().map_or(0, Trial::samples)
    }

    pub fn sampling_rate(&self) -> f64 {
        self.trials.first().map_or(0.0, Trial::sampling_rate)
    }

    /// Distinct classes present in the labels, sorted.
    pub fn classes(&self) -> BTreeSet<ClassId> {
        self.labels
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
    }

    /// Trials carrying `class`, in acquisition order.
    pub fn trials_of_class<'a>(&'a self, class: &'a ClassId) -> impl Iterator<Item = &'a Trial> + 'a {
        self.trials
            .iter()
            .zip(self.labels.iter().flatten())
            .filter(move |(_, l)| *l == class)
            .map(|(t, _)| t)
    }

    /// Same id and labels, trials replaced (must keep the count).
    pub fn with_trials(&self, trials: Vec<Trial>) -> DomainSet {
        debug_assert_eq!(trials.len(), self.trials.len());
        DomainSet {
            domain_id: self.domain_id.clone(),
            trials,
            labels: self.labels.clone(),
        }
    }

    pub fn with_labels(&self, labels: Option<Vec<ClassId>>) -> DomainSet {
        DomainSet {
            domain_id: self.domain_id.clone(),
            trials: self.trials.clone(),
            labels,
        }
    }
}

/// A broken domain invariant. `trial` is set when a single trial is at fault.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: Option<usize>,
    pub rule: ViolationRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationRule {
    Empty,
    NonFinite,
    ShapeMismatch,
    SamplingRateMismatch,
    LabelLengthMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match self.rule {
            ViolationRule::Empty => "domain holds no trials",
            ViolationRule::NonFinite => "non-finite sample",
            ViolationRule::ShapeMismatch => "trial shape differs from the first trial",
            ViolationRule::SamplingRateMismatch => "sampling rate differs from the first trial",
            ViolationRule::LabelLengthMismatch => "label/trial length mismatch",
        };
        match self.trial {
            Some(i) => write!(f, "trial {i}: {rule}"),
            None => f.write_str(rule),
        }
    }
}

/// Lists every broken invariant of `d`; empty when the domain is well formed.
pub fn validate_domain(d: &DomainSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(first) = d.trials.first() else {
        out.push(Violation {
            trial: None,
            rule: ViolationRule::Empty,
        });
        return out;
    };
    let shape = first.data.shape();
    let fs = first.sampling_rate;
    for (i, t) in d.trials.iter().enumerate() {
        if t.data.shape() != shape {
            out.push(Violation {
                trial: Some(i),
                rule: ViolationRule::ShapeMismatch,
            });
        }
        if t.sampling_rate != fs {
            out.push(Violation {
                trial: Some(i),
                rule: ViolationRule::SamplingRateMismatch,
            });
        }
        if !t.is_finite() {
            out.push(Violation {
                trial: Some(i),
                rule: ViolationRule::NonFinite,
            });
        }
    }
    if let Some(labels) = &d.labels {
        if labels.len() != d.trials.len() {
            out.push(Violation {
                trial: None,
                rule: ViolationRule::LabelLengthMismatch,
            });
        }
    }
    out
}

/// Injective map from source classes to target classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<ClassId, ClassId>", into = "BTreeMap<ClassId, ClassId>")]
pub struct ClassPairing {
    pairs: BTreeMap<ClassId, ClassId>,
}

impl ClassPairing {
    pub fn new(pairs: BTreeMap<ClassId, ClassId>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in pairs.values() {
            if !seen.insert(t) {
                return Err(Error::NonInjectivePairing(format!(
                    "target class '{t}' is paired more than once"
                )));
            }
        }
        Ok(ClassPairing { pairs })
    }

    pub fn from_pairs<S: Into<ClassId>, T: Into<ClassId>>(
        pairs: impl IntoIterator<Item = (S, T)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (s, t) in pairs {
            let s = s.into();
            if map.contains_key(&s) {
                return Err(Error::NonInjectivePairing(format!(
                    "source class '{s}' is paired more than once"
                )));
            }
            map.insert(s, t.into());
        }
        Self::new(map)
    }

    pub fn identity(classes: &BTreeSet<ClassId>) -> Self {
        ClassPairing {
            pairs: classes.iter().map(|c| (c.clone(), c.clone())).collect(),
        }
    }

    pub fn target_of(&self, source: &ClassId) -> Option<&ClassId> {
        self.pairs.get(source)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClassId, &ClassId)> {
        self.pairs.iter()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl TryFrom<BTreeMap<ClassId, ClassId>> for ClassPairing {
    type Error = Error;

    fn try_from(pairs: BTreeMap<ClassId, ClassId>) -> Result<Self> {
        ClassPairing::new(pairs)
    }
}

impl From<ClassPairing> for BTreeMap<ClassId, ClassId> {
    fn from(p: ClassPairing) -> Self {
        p.pairs
    }
}

/// Resolves how source classes map onto target classes.
///
/// An explicit pairing is returned as given. Without one, identical label
/// spaces pair class-to-class; differing spaces are never guessed.
pub fn pair_classes(
    source: &BTreeSet<ClassId>,
    target: &BTreeSet<ClassId>,
    explicit: Option<ClassPairing>,
) -> Result<ClassPairing> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    if source.len() != target.len() {
        return Err(Error::CardinalityMismatch {
            source_classes: source.len(),
            target_classes: target.len(),
        });
    }
    if source != target {
        return Err(Error::AmbiguousPairing);
    }
    Ok(ClassPairing::identity(source))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(c: usize, t: usize) -> Trial {
        Trial::new(DMatrix::from_fn(c, t, |i, j| (i * t + j) as f64), 100.0).unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<ClassId> {
        ids.iter().map(|s| ClassId::from(*s)).collect()
    }

    #[test]
    fn well_formed_domain_has_no_violations() {
        let d = DomainSet::from_parts_unchecked("s1", (0..10).map(|_| trial(4, 100)).collect(), None);
        assert!(validate_domain(&d).is_empty());
    }

    #[test]
    fn nan_trial_is_reported_by_index() {
        let mut trials: Vec<_> = (0..10).map(|_| trial(4, 100)).collect();
        let mut bad = trials[3].data().clone();
        bad[(1, 7)] = f64::NAN;
        trials[3] = trials[3].with_data(bad);
        let d = DomainSet::from_parts_unchecked("s1", trials, None);
        assert_eq!(
            validate_domain(&d),
            vec![Violation {
                trial: Some(3),
                rule: ViolationRule::NonFinite
            }]
        );
        assert!(DomainSet::new("s1", d.trials().to_vec(), None).is_err());
    }

    #[test]
    fn label_length_mismatch_is_reported() {
        let trials: Vec<_> = (0..10).map(|_| trial(4, 100)).collect();
        let labels = vec![ClassId::from("a"); 9];
        let d = DomainSet::from_parts_unchecked("s1", trials, Some(labels));
        assert_eq!(
            validate_domain(&d),
            vec![Violation {
                trial: None,
                rule: ViolationRule::LabelLengthMismatch
            }]
        );
    }

    #[test]
    fn empty_and_ragged_domains() {
        let d = DomainSet::from_parts_unchecked("e", vec![], None);
        assert_eq!(validate_domain(&d)[0].rule, ViolationRule::Empty);
        let d = DomainSet::from_parts_unchecked("r", vec![trial(4, 100), trial(4, 99)], None);
        assert_eq!(validate_domain(&d)[0].trial, Some(1));
    }

    #[test]
    fn rank_deficiency_flag() {
        assert!(trial(8, 4).is_rank_deficient());
        assert!(!trial(4, 8).is_rank_deficient());
    }

    #[test]
    fn identical_label_spaces_pair_identically() {
        let p = pair_classes(&set(&["left", "right"]), &set(&["right", "left"]), None).unwrap();
        assert_eq!(p.target_of(&"left".into()), Some(&"left".into()));
        assert_eq!(p.target_of(&"right".into()), Some(&"right".into()));
        let again = pair_classes(&set(&["right", "left"]), &set(&["left", "right"]), None).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn explicit_heterogeneous_pairing_is_returned_verbatim() {
        let explicit = ClassPairing::from_pairs([("right", "left"), ("feet", "tongue")]).unwrap();
        let p = pair_classes(
            &set(&["right", "feet"]),
            &set(&["left", "tongue"]),
            Some(explicit.clone()),
        )
        .unwrap();
        assert_eq!(p, explicit);
    }

    #[test]
    fn pairing_errors() {
        assert!(matches!(
            pair_classes(&set(&["a", "b"]), &set(&["x", "y", "z"]), None),
            Err(Error::CardinalityMismatch { .. })
        ));
        assert!(matches!(
            pair_classes(&set(&["a", "b"]), &set(&["x", "y"]), None),
            Err(Error::AmbiguousPairing)
        ));
        assert!(ClassPairing::from_pairs([("a", "x"), ("b", "x")]).is_err());
        assert!(ClassPairing::from_pairs([("a", "x"), ("a", "y")]).is_err());
    }

    #[test]
    fn pairing_json_rejects_non_injective_maps() {
        let ok: ClassPairing = serde_json::from_str(r#"{"right":"left","feet":"tongue"}"#).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(serde_json::from_str::<ClassPairing>(r#"{"a":"x","b":"x"}"#).is_err());
    }
}
