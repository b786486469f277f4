//! Euclidean alignment: whitening each domain by the inverse square root of
//! its mean trial covariance, so the aligned domain's mean covariance is `I`.
//!
//! Fitting never looks at labels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{DomainSet, Trial};
use crate::spd::{gram, SpdMatrix};

/// Fitted reference `R̄` together with the map `R̄^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EaTransform {
    reference: SpdMatrix,
    map: DMatrix<f64>,
    n_trials_fit: usize,
}

impl EaTransform {
    pub fn from_reference(reference: SpdMatrix, n_trials_fit: usize) -> Self {
        let map = reference.invsqrt();
        EaTransform {
            reference,
            map,
            n_trials_fit,
        }
    }

    pub fn reference(&self) -> &SpdMatrix {
        &self.reference
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    pub fn n_trials_fit(&self) -> usize {
        self.n_trials_fit
    }

    pub fn channels(&self) -> usize {
        self.map.nrows()
    }

    pub fn apply(&self, trial: &Trial) -> Result<Trial> {
        apply_ea(self, trial)
    }

    pub fn apply_domain(&self, d: &DomainSet) -> Result<DomainSet> {
        let trials = d.trials().iter().map(|t| apply_ea(self, t)).collect::<Result<Vec<_>>>()?;
        Ok(d.with_trials(trials))
    }
}

/// Running sum of trial covariances for incremental fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EaState {
    running_sum: Option<DMatrix<f64>>,
    count: usize,
}

impl EaState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn running_sum(&self) -> Option<&DMatrix<f64>> {
        self.running_sum.as_ref()
    }

    pub fn update(mut self, trial: &Trial) -> Result<Self> {
        self.push(trial)?;
        Ok(self)
    }

    pub fn push(&mut self, trial: &Trial) -> Result<()> {
        let cov = gram(trial.data());
        match &mut self.running_sum {
            None => self.running_sum = Some(cov),
            Some(sum) => {
                if sum.nrows() != cov.nrows() {
                    return Err(Error::shape(
                        format!("{} channels", sum.nrows()),
                        format!("{} channels", cov.nrows()),
                    ));
                }
                *sum += cov;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn finalize(&self) -> Result<EaTransform> {
        let sum = self.running_sum.as_ref().ok_or(Error::EmptyState)?;
        let reference = SpdMatrix::new(sum / self.count as f64)?;
        Ok(EaTransform::from_reference(reference, self.count))
    }
}

pub fn update_ea(state: EaState, trial: &Trial) -> Result<EaState> {
    state.update(trial)
}

pub fn finalize_ea(state: &EaState) -> Result<EaTransform> {
    state.finalize()
}

pub fn fit_ea_trials<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> Result<EaTransform> {
    let mut state = EaState::new();
    for t in trials {
        state.push(t)?;
    }
    state.finalize()
}

/// Fits on every trial of the domain; labels are ignored.
pub fn fit_ea(domain: &DomainSet) -> Result<EaTransform> {
    fit_ea_trials(domain.trials())
}

pub fn apply_ea(t: &EaTransform, trial: &Trial) -> Result<Trial> {
    if trial.channels() != t.channels() {
        return Err(Error::shape(
            format!("{} channels", t.channels()),
            format!("{} channels", trial.channels()),
        ));
    }
    Ok(trial.with_data(&t.map * trial.data()))
}

/// `‖(1/N) Σ XₙXₙᵀ − I‖_F` over the domain as given.
pub fn ea_residual(domain: &DomainSet) -> f64 {
    match crate::spd::raw_mean_covariance(domain.trials()) {
        Some(mean) => {
            let c = mean.nrows();
            (mean - DMatrix::identity(c, c)).norm()
        }
        None => 0.0,
    }
}

/// Online alignment that refreshes its transform every `refresh_every`
/// trials. Trials are aligned with the transform current after they are
/// absorbed.
#[derive(Debug, Clone)]
pub struct StreamingEa {
    state: EaState,
    refresh_every: usize,
    pending: usize,
    current: Option<EaTransform>,
}

impl StreamingEa {
    pub fn new(refresh_every: usize) -> Result<Self> {
        if refresh_every == 0 {
            return Err(Error::InvalidArgument("refresh interval must be at least 1".into()));
        }
        Ok(StreamingEa {
            state: EaState::new(),
            refresh_every,
            pending: 0,
            current: None,
        })
    }

    /// Starts from calibration trials already collected.
    pub fn with_history<'a>(refresh_every: usize, history: impl IntoIterator<Item = &'a Trial>) -> Result<Self> {
        let mut s = Self::new(refresh_every)?;
        for t in history {
            s.state.push(t)?;
        }
        if s.state.count() > 0 {
            s.current = Some(s.state.finalize()?);
        }
        Ok(s)
    }

    pub fn transform(&self) -> Option<&EaTransform> {
        self.current.as_ref()
    }

    /// Absorbs `trial` and returns it aligned.
    pub fn push(&mut self, trial: &Trial) -> Result<Trial> {
        self.state.push(trial)?;
        self.pending += 1;
        if self.current.is_none() || self.pending >= self.refresh_every {
            self.current = Some(self.state.finalize()?);
            self.pending = 0;
        }
        apply_ea(self.current.as_ref().expect("transform set above"), trial)
    }
}
