//! Pipeline descriptions: an ordered list of stages with their parameters.

use serde::{Deserialize, Serialize};

use crate::alignment::la::DEFAULT_TARGET_SHRINKAGE;
use crate::decoding::{DEFAULT_CSP_SHRINKAGE, DEFAULT_FILTERS_PER_SIDE, DEFAULT_LDA_SHRINKAGE};
use crate::error::{Error, Result};
use crate::model::ClassPairing;
use crate::preprocess::BandpassSpec;
use crate::spd::MeanEstimator;

/// Which target trials feed the target EA reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EaReference {
    /// Every target trial, labelled or not.
    #[default]
    AllTarget,
    /// Simulated online use: the calibration block seeds the reference and
    /// the remaining trials update it one at a time in acquisition order.
    Calibration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EaParams {
    pub reference: EaReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaParams {
    pub estimator: MeanEstimator,
    pub target_shrinkage: f64,
    /// Needed when source and target label spaces differ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing: Option<ClassPairing>,
}

impl Default for LaParams {
    fn default() -> Self {
        LaParams {
            estimator: MeanEstimator::Euclidean,
            target_shrinkage: DEFAULT_TARGET_SHRINKAGE,
            pairing: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CspParams {
    pub n_per_side: usize,
    pub gamma: f64,
}

impl Default for CspParams {
    fn default() -> Self {
        CspParams {
            n_per_side: DEFAULT_FILTERS_PER_SIDE,
            gamma: DEFAULT_CSP_SHRINKAGE,
        }
    }
}

/// LDA over pooled source and target-calibration features. Source samples
/// weigh 1, target calibration samples `target_weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaParams {
    pub target_weight: f64,
    pub shrinkage: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams {
            target_weight: 2.0,
            shrinkage: DEFAULT_LDA_SHRINKAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum Stage {
    Bandpass(BandpassSpec),
    Car,
    Ea(EaParams),
    La(LaParams),
    Csp(CspParams),
    Logvar,
    Coral,
    WeightedLda(LdaParams),
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Bandpass(_) => "bandpass",
            Stage::Car => "car",
            Stage::Ea(_) => "ea",
            Stage::La(_) => "la",
            Stage::Csp(_) => "csp",
            Stage::Logvar => "logvar",
            Stage::Coral => "coral",
            Stage::WeightedLda(_) => "weighted-lda",
        }
    }

    /// Stages that act on trials rather than feature vectors.
    pub fn is_trial_stage(&self) -> bool {
        matches!(
            self,
            Stage::Bandpass(_) | Stage::Car | Stage::Ea(_) | Stage::La(_) | Stage::Csp(_)
        )
    }

    /// Whether the stage can be computed per domain without labels, once,
    /// independent of which domain is the target.
    pub(crate) fn is_domain_local(&self) -> bool {
        match self {
            Stage::Bandpass(_) | Stage::Car => true,
            Stage::Ea(p) => p.reference == EaReference::AllTarget,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub stages: Vec<Stage>,
}

/// Built-in configurations. The first six are the placement study: no
/// alignment, alignment before spatial filtering and alignment after it,
/// each with and without common average referencing.
pub const PRESET_NAMES: &[&str] = &[
    "tf-rcsp",
    "tf-ea-rcsp",
    "tf-rcsp-ea",
    "tf-car-rcsp",
    "tf-car-ea-rcsp",
    "tf-car-rcsp-ea",
    "ea-rcsp",
    "tf-la-rcsp",
    "tf-car-la-rcsp",
    "tf-rcsp-coral",
];

impl PipelineConfig {
    pub fn new(name: impl Into<String>, stages: Vec<Stage>) -> Result<Self> {
        let c = PipelineConfig {
            name: name.into(),
            stages,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn preset(name: &str) -> Option<PipelineConfig> {
        let tf = || Stage::Bandpass(BandpassSpec::default());
        let ea = || Stage::Ea(EaParams::default());
        let la = || Stage::La(LaParams::default());
        let csp = || Stage::Csp(CspParams::default());
        let tail = || [Stage::Logvar, Stage::WeightedLda(LdaParams::default())];
        let mut stages = match name {
            "tf-rcsp" => vec![tf(), csp()],
            "tf-ea-rcsp" => vec![tf(), ea(), csp()],
            "tf-rcsp-ea" => vec![tf(), csp(), ea()],
            "tf-car-rcsp" => vec![tf(), Stage::Car, csp()],
            "tf-car-ea-rcsp" => vec![tf(), Stage::Car, ea(), csp()],
            "tf-car-rcsp-ea" => vec![tf(), Stage::Car, csp(), ea()],
            "ea-rcsp" => vec![ea(), csp()],
            "tf-la-rcsp" => vec![tf(), la(), csp()],
            "tf-car-la-rcsp" => vec![tf(), Stage::Car, la(), csp()],
            "tf-rcsp-coral" => {
                return Some(PipelineConfig {
                    name: name.into(),
                    stages: vec![tf(), csp(), Stage::Logvar, Stage::Coral, Stage::WeightedLda(LdaParams::default())],
                })
            }
            _ => return None,
        };
        stages.extend(tail());
        Some(PipelineConfig {
            name: name.into(),
            stages,
        })
    }

    pub fn stage_names(&self) -> Vec<&'static str> {
        self.stages.iter().map(Stage::name).collect()
    }

    fn position(&self, pred: impl Fn(&Stage) -> bool) -> Vec<usize> {
        self.stages
            .iter()
            .enumerate()
            .filter(|(_, s)| pred(s))
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the ordering rules; the error names the first rule broken.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("{}: {msg}", self.name)));
        if self.stages.is_empty() {
            return bad("no stages".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.stages {
            if !seen.insert(s.name()) {
                return bad(format!("stage '{}' appears more than once", s.name()));
            }
        }
        let lda = self.position(|s| matches!(s, Stage::WeightedLda(_)));
        if lda != [self.stages.len() - 1] {
            return bad("exactly one classifier stage is required and it must be last".into());
        }
        let logvar = self.position(|s| matches!(s, Stage::Logvar));
        let Some(&logvar) = logvar.first() else {
            return bad("a logvar feature stage is required before the classifier".into());
        };
        if let Some(&csp) = self.position(|s| matches!(s, Stage::Csp(_))).first() {
            if csp > logvar {
                return bad("logvar must follow csp".into());
            }
            for i in self.position(|s| matches!(s, Stage::Bandpass(_) | Stage::Car)) {
                if i > csp {
                    return bad(format!("{} must precede csp", self.stages[i].name()));
                }
            }
        }
        let alignments = self.position(|s| matches!(s, Stage::Ea(_) | Stage::La(_)));
        if alignments.len() > 1 {
            return bad("ea and la are alternatives; use at most one".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.is_trial_stage() && i > logvar {
                return bad(format!("{} acts on trials and must precede logvar", s.name()));
            }
        }
        if let Some(&coral) = self.position(|s| matches!(s, Stage::Coral)).first() {
            if coral < logvar {
                return bad("coral acts on features and must follow logvar".into());
            }
        }
        for s in &self.stages {
            match s {
                Stage::Csp(p) if p.n_per_side == 0 || !(0.0..=1.0).contains(&p.gamma) => {
                    return bad("csp needs n_per_side >= 1 and gamma in [0, 1]".into())
                }
                Stage::La(p) if !(0.0..=1.0).contains(&p.target_shrinkage) => {
                    return bad("la target_shrinkage must lie in [0, 1]".into())
                }
                Stage::WeightedLda(p)
                    if !(p.target_weight.is_finite() && p.target_weight >= 0.0)
                        || !(0.0..=1.0).contains(&p.shrinkage) =>
                {
                    return bad("weighted-lda needs target_weight >= 0 and shrinkage in [0, 1]".into())
                }
                Stage::Bandpass(b) if !(b.low_hz > 0.0 && b.low_hz < b.high_hz) || b.order == 0 => {
                    return bad("bandpass needs 0 < low_hz < high_hz and order >= 1".into())
                }
                _ => {}
            }
        }
        Ok(())
    }
}
