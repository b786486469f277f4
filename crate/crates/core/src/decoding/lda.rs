//! Two-class linear discriminant with sample weights and shrinkage.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ClassId;
use crate::spd::{shrink, SpdMatrix};

pub const DEFAULT_LDA_SHRINKAGE: f64 = 0.05;

/// `decision = wᵀx + b`; non-negative decisions go to the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: DVector<f64>,
    bias: f64,
    class_order: (ClassId, ClassId),
}

impl LinearClassifier {
    /// `class_order` is `(negative, positive)`.
    pub fn new(weights: DVector<f64>, bias: f64, class_order: (ClassId, ClassId)) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) || !bias.is_finite() {
            return Err(Error::InvalidArgument("classifier parameters must be finite".into()));
        }
        Ok(LinearClassifier {
            weights,
            bias,
            class_order,
        })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn class_order(&self) -> &(ClassId, ClassId) {
        &self.class_order
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_value(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim() {
            return Err(Error::shape(format!("{} features", self.dim()), features.len()));
        }
        Ok(self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias)
    }

    pub fn predict(&self, features: &[f64]) -> Result<&ClassId> {
        let v = self.decision_value(features)?;
        Ok(if v >= 0.0 {
            &self.class_order.1
        } else {
            &self.class_order.0
        })
    }

    /// Same boundary with every decision negated and the classes swapped.
    pub fn flipped(&self) -> LinearClassifier {
        LinearClassifier {
            weights: -&self.weights,
            bias: -self.bias,
            class_order: (self.class_order.1.clone(), self.class_order.0.clone()),
        }
    }
}

/// Fits a weighted LDA on the rows of `features`.
///
/// Class means and the pooled within-class covariance are weighted; the
/// covariance is shrunk toward `(tr/k) I`. The bias puts the boundary at the
/// midpoint of the means, shifted by the log ratio of class weight totals.
/// The negative class is the lexicographically smaller label.
pub fn fit_lda(
    features: &DMatrix<f64>,
    labels: &[ClassId],
    sample_weights: Option<&[f64]>,
    shrinkage: f64,
) -> Result<LinearClassifier> {
    let (n, k) = features.shape();
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), labels.len()));
    }
    if let Some(w) = sample_weights {
        if w.len() != n {
            return Err(Error::shape(format!("{n} sample weights"), w.len()));
        }
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("sample weights must be finite and non-negative".into()));
        }
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidArgument(format!("LDA shrinkage {shrinkage} outside [0, 1]")));
    }
    let mut classes: Vec<&ClassId> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    match classes.len() {
        2 => {}
        c if c < 2 => return Err(Error::SingleClass(c)),
        c => {
            return Err(Error::InvalidArgument(format!(
                "weighted LDA is binary, got {c} classes"
            )))
        }
    }
    let (neg, pos) = (classes[0].clone(), classes[1].clone());
    let weight = |i: usize| sample_weights.map_or(1.0, |w| w[i]);

    let mut totals = [0.0f64; 2];
    let mut means = [DVector::zeros(k), DVector::zeros(k)];
    for (i, l) in labels.iter().enumerate() {
        let side = usize::from(*l == pos);
        let w = weight(i);
        totals[side] += w;
        means[side] += features.row(i).transpose() * w;
    }
    if totals.iter().any(|t| *t <= 0.0) {
        return Err(Error::SingleClass(1));
    }
    means[0] /= totals[0];
    means[1] /= totals[1];

    let mut pooled = DMatrix::zeros(k, k);
    for (i, l) in labels.iter().enumerate() {
        let side = usize::from(*l == pos);
        let d = features.row(i).transpose() - &means[side];
        pooled += &d * d.transpose() * weight(i);
    }
    pooled /= totals[0] + totals[1];
    let pooled = shrink(&pooled, shrinkage);

    let diff = &means[1] - &means[0];
    let weights = match SpdMatrix::new(pooled) {
        Ok(cov) => cov.inverse() * &diff,
        // no within-class spread at all
        Err(Error::DegenerateCovariance(_)) => diff.clone(),
        Err(e) => return Err(e),
    };
    let midpoint = (&means[0] + &means[1]) * 0.5;
    let bias = -weights.dot(&midpoint) + (totals[1] / totals[0]).ln();
    LinearClassifier::new(weights, bias, (neg, pos))
}
