//! Trial-space and feature-space alignment.

pub mod coral;
pub mod ea;
pub mod la;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix_json::MatrixJson;
use crate::model::{ClassId, ClassPairing};
use crate::spd::SpdMatrix;

pub use coral::{apply_coral, feature_covariance, fit_coral, CoralTransform};
pub use ea::{
    apply_ea, ea_residual, finalize_ea, fit_ea, fit_ea_trials, update_ea, EaState, EaTransform, StreamingEa,
};
pub use la::{apply_la, fit_la, LaOptions, LaTransform};

/// Share of absolute mass on the diagonal: `Σ|mᵢᵢ| / Σ|mᵢⱼ|`.
///
/// Close to 1 when each output channel is driven mainly by the same input
/// channel. Zero for an all-zero matrix.
pub fn diag_dominance(map: &DMatrix<f64>) -> f64 {
    let total: f64 = map.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let k = map.nrows().min(map.ncols());
    (0..k).map(|i| map[(i, i)].abs()).sum::<f64>() / total
}

/// JSON audit record of a fitted transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformRecord {
    Ea {
        domain_id: String,
        n_trials_fit: usize,
        reference: MatrixJson,
        map: MatrixJson,
    },
    La {
        domain_id: String,
        target_domain_id: String,
        pairing: ClassPairing,
        per_class: BTreeMap<ClassId, MatrixJson>,
    },
    Coral {
        domain_id: String,
        target_domain_id: String,
        map: MatrixJson,
        source_cov: MatrixJson,
        target_cov: MatrixJson,
    },
}

impl TransformRecord {
    pub fn ea(domain_id: &str, t: &EaTransform) -> Self {
        TransformRecord::Ea {
            domain_id: domain_id.to_owned(),
            n_trials_fit: t.n_trials_fit(),
            reference: t.reference().values().into(),
            map: t.map().into(),
        }
    }

    pub fn la(domain_id: &str, target_domain_id: &str, t: &LaTransform) -> Self {
        TransformRecord::La {
            domain_id: domain_id.to_owned(),
            target_domain_id: target_domain_id.to_owned(),
            pairing: t.pairing().clone(),
            per_class: t.maps().map(|(k, m)| (k.clone(), m.into())).collect(),
        }
    }

    pub fn coral(domain_id: &str, target_domain_id: &str, t: &CoralTransform) -> Self {
        TransformRecord::Coral {
            domain_id: domain_id.to_owned(),
            target_domain_id: target_domain_id.to_owned(),
            map: t.map().into(),
            source_cov: t.source_cov().values().into(),
            target_cov: t.target_cov().values().into(),
        }
    }

    /// Rebuilds an EA transform from its record.
    pub fn to_ea(&self) -> Option<Result<EaTransform>> {
        match self {
            TransformRecord::Ea {
                reference,
                n_trials_fit,
                ..
            } => Some(
                reference
                    .to_matrix()
                    .and_then(SpdMatrix::new)
                    .map(|r| EaTransform::from_reference(r, *n_trials_fit)),
            ),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_examples() {
        assert_eq!(diag_dominance(&DMatrix::identity(5, 5)), 1.0);
        assert!((diag_dominance(&DMatrix::from_element(4, 4, 1.0)) - 0.25).abs() < 1e-15);
        assert_eq!(diag_dominance(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn ea_record_round_trips() {
        let r = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0])).unwrap();
        let t = EaTransform::from_reference(r, 7);
        let rec = TransformRecord::ea("s1", &t);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains(r#""kind":"ea""#));
        let back: TransformRecord = serde_json::from_str(&json).unwrap();
        let t2 = back.to_ea().unwrap().unwrap();
        assert!((t2.map() - t.map()).norm() < 1e-15);
        assert_eq!(t2.n_trials_fit(), 7);
    }
}
