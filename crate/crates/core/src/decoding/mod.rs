//! Spatial filtering, log-variance features and the linear classifier.

pub mod csp;
pub mod lda;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_json::MatrixJson;
use crate::model::{ClassId, Trial};

pub use csp::{fit_csp, SpatialFilterBank, DEFAULT_CSP_SHRINKAGE, DEFAULT_FILTERS_PER_SIDE};
pub use lda::{fit_lda, LinearClassifier, DEFAULT_LDA_SHRINKAGE};

/// Guard added to every variance before the logarithm.
pub const VARIANCE_EPS: f64 = 1e-20;

/// `log(var(row) + ε)` for each row, population variance.
pub fn log_variance(x: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let t = x.ncols() as f64;
    x.row_iter()
        .map(|row| {
            let mean = row.sum() / t;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
            (var + VARIANCE_EPS).ln()
        })
        .collect()
}

pub fn log_variance_features(bank: &SpatialFilterBank, trial: &Trial) -> Result<Vec<f64>> {
    Ok(log_variance(bank.apply(trial)?.data()))
}

/// JSON form of a fitted spatial filter bank and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "model")]
pub struct ModelRecord {
    pub filters: MatrixJson,
    pub n_per_side: usize,
    pub csp_class_order: (ClassId, ClassId),
    pub spectrum: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub class_order: (ClassId, ClassId),
}

impl ModelRecord {
    pub fn new(bank: &SpatialFilterBank, clf: &LinearClassifier) -> Result<Self> {
        if clf.dim() != bank.filters().nrows() {
            return Err(Error::shape(
                format!("{} classifier weights", bank.filters().nrows()),
                clf.dim(),
            ));
        }
        Ok(ModelRecord {
            filters: bank.filters().into(),
            n_per_side: bank.n_per_side(),
            csp_class_order: bank.class_order().clone(),
            spectrum: bank.spectrum().to_vec(),
            weights: clf.weights().iter().copied().collect(),
            bias: clf.bias(),
            class_order: clf.class_order().clone(),
        })
    }

    pub fn to_parts(&self) -> Result<(SpatialFilterBank, LinearClassifier)> {
        let bank = SpatialFilterBank::new(
            self.filters.to_matrix()?,
            self.n_per_side,
            self.csp_class_order.clone(),
            self.spectrum.clone(),
        )?;
        let clf = LinearClassifier::new(
            nalgebra::DVector::from_vec(self.weights.clone()),
            self.bias,
            self.class_order.clone(),
        )?;
        Ok((bank, clf))
    }
}
