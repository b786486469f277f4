//! Covariances and functions of symmetric positive-definite matrices.
//!
//! Every matrix function goes through one symmetric eigendecomposition and is
//! re-symmetrized afterwards. Small eigenvalues are clamped to a floor relative
//! to the largest one, which keeps rank-deficient references (for example after
//! common average referencing) invertible with a large but bounded gain.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Trial;

/// Relative eigenvalue floor: eigenvalues below `floor * max` are raised to it.
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-10;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// How trial means are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanEstimator {
    #[default]
    Euclidean,
    LogEuclidean,
}

/// Scaling of a single trial's covariance. Alignment depends on the raw form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceScaling {
    /// `X Xᵀ`.
    #[default]
    Raw,
    /// `X Xᵀ / t`.
    PerSample,
}

/// A symmetric matrix whose eigenvalues all sit at or above
/// `eigen_floor * max_eigenvalue`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    values: DMatrix<f64>,
    eigen_floor: f64,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    clamped: usize,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_floor(m, DEFAULT_EIGEN_FLOOR)
    }

    /// Checks symmetry, then clamps eigenvalues to `eigen_floor` relative to
    /// the largest. The stored matrix is rebuilt only if clamping happened.
    pub fn with_floor(m: DMatrix<f64>, eigen_floor: f64) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::shape("non-empty square matrix", format!("{}x{}", m.nrows(), m.ncols())));
        }
        if !(0.0..1.0).contains(&eigen_floor) {
            return Err(Error::InvalidArgument(format!("eigen floor {eigen_floor} outside [0, 1)")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateCovariance("matrix has non-finite entries"));
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateCovariance("all-zero matrix"));
        }
        if (&m - m.transpose()).norm() > SYMMETRY_TOLERANCE * norm {
            return Err(Error::InvalidArgument("matrix is not symmetric".into()));
        }
        let m = symmetrize(m);
        let eig = SymmetricEigen::new(m.clone());
        let max = eig.eigenvalues.max();
        if max <= 0.0 {
            return Err(Error::DegenerateCovariance("largest eigenvalue is not positive"));
        }
        let floor = eigen_floor * max;
        let mut eigenvalues = eig.eigenvalues;
        let mut clamped = 0;
        for v in eigenvalues.iter_mut() {
            if *v < floor {
                *v = floor;
                clamped += 1;
            }
        }
        let values = if clamped > 0 {
            reconstruct(&eig.eigenvectors, eigenvalues.iter().copied())
        } else {
            m
        };
        Ok(SpdMatrix {
            values,
            eigen_floor,
            eigenvalues,
            eigenvectors: eig.eigenvectors,
            clamped,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn eigen_floor(&self) -> f64 {
        self.eigen_floor
    }

    /// Eigenvalues after clamping, in the solver's order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Number of eigenvalues that were raised to the floor.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    /// `M^p` through the eigendecomposition.
    pub fn power(&self, p: f64) -> DMatrix<f64> {
        reconstruct(&self.eigenvectors, self.eigenvalues.iter().map(|v| v.powf(p)))
    }

    /// Principal matrix logarithm.
    pub fn log(&self) -> DMatrix<f64> {
        reconstruct(&self.eigenvectors, self.eigenvalues.iter().map(|v| v.ln()))
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        reconstruct(&self.eigenvectors, self.eigenvalues.iter().map(|v| v.sqrt()))
    }

    pub fn invsqrt(&self) -> DMatrix<f64> {
        reconstruct(&self.eigenvectors, self.eigenvalues.iter().map(|v| 1.0 / v.sqrt()))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        reconstruct(&self.eigenvectors, self.eigenvalues.iter().map(|v| 1.0 / v))
    }
}

fn reconstruct(vectors: &DMatrix<f64>, values: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (mut col, v) in scaled.column_iter_mut().zip(values) {
        col *= v;
    }
    symmetrize(scaled * vectors.transpose())
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// `X Xᵀ`: no centering and no division by the sample count.
pub fn trial_covariance(x: &Trial) -> DMatrix<f64> {
    gram(x.data())
}

pub fn trial_covariance_scaled(x: &Trial, scaling: CovarianceScaling) -> DMatrix<f64> {
    let c = gram(x.data());
    match scaling {
        CovarianceScaling::Raw => c,
        CovarianceScaling::PerSample => c / x.samples() as f64,
    }
}

pub(crate) fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(x * x.transpose())
}

/// `(1 - λ) M + λ (tr M / c) I`.
pub fn shrink(m: &DMatrix<f64>, shrinkage: f64) -> DMatrix<f64> {
    if shrinkage == 0.0 {
        return m.clone();
    }
    let c = m.nrows();
    let mu = m.trace() / c as f64;
    m * (1.0 - shrinkage) + DMatrix::identity(c, c) * (shrinkage * mu)
}

fn check_shrinkage(shrinkage: f64) -> Result<()> {
    if (0.0..=1.0).contains(&shrinkage) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("shrinkage {shrinkage} outside [0, 1]")))
    }
}

/// Plain arithmetic mean of the trial covariances, without flooring.
pub fn raw_mean_covariance<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> Option<DMatrix<f64>> {
    let mut iter = trials.into_iter();
    let first = iter.next()?;
    let mut sum = trial_covariance(first);
    let mut n = 1usize;
    for t in iter {
        sum += trial_covariance(t);
        n += 1;
    }
    Some(sum / n as f64)
}

fn check_uniform(trials: &[&Trial]) -> Result<(usize, usize)> {
    let first = trials
        .first()
        .ok_or(Error::InvalidArgument("mean of zero trials".into()))?;
    let shape = (first.channels(), first.samples());
    for t in trials {
        if (t.channels(), t.samples()) != shape {
            return Err(Error::shape(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", t.channels(), t.samples()),
            ));
        }
    }
    Ok(shape)
}

/// Mean covariance of `trials`, shrunk by `shrinkage` toward a scaled identity.
///
/// The log-Euclidean mean floors each trial covariance before its logarithm.
pub fn mean_covariance<'a>(
    trials: impl IntoIterator<Item = &'a Trial>,
    estimator: MeanEstimator,
    shrinkage: f64,
) -> Result<SpdMatrix> {
    check_shrinkage(shrinkage)?;
    let trials: Vec<&Trial> = trials.into_iter().collect();
    let (c, _) = check_uniform(&trials)?;
    let n = trials.len() as f64;
    let mean = match estimator {
        MeanEstimator::Euclidean => {
            let mut sum = DMatrix::zeros(c, c);
            for t in &trials {
                sum += trial_covariance(t);
            }
            sum / n
        }
        MeanEstimator::LogEuclidean => {
            let mut sum = DMatrix::zeros(c, c);
            for t in &trials {
                sum += SpdMatrix::new(trial_covariance(t))?.log();
            }
            expm_symmetric(&(sum / n))
        }
    };
    if mean.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateCovariance("all-zero data"));
    }
    SpdMatrix::new(shrink(&mean, shrinkage))
}

/// Matrix exponential of a symmetric matrix.
pub fn expm_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m.clone()));
    reconstruct(&eig.eigenvectors, eig.eigenvalues.iter().map(|v| v.exp()))
}

/// `M^{-1/2}`: the symmetric positive-definite `S` with `S M S = I`.
pub fn invsqrt_spd(m: &SpdMatrix) -> DMatrix<f64> {
    m.invsqrt()
}

/// `M^{1/2}`: the symmetric positive-definite `S` with `S S = M`.
pub fn sqrt_spd(m: &SpdMatrix) -> DMatrix<f64> {
    m.sqrt()
}

/// `‖A - B‖_F / ‖B‖_F`, or the absolute norm when `B` is zero.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = (a - b).norm();
    let n = b.norm();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial(rows: &[&[f64]]) -> Trial {
        let c = rows.len();
        let t = rows[0].len();
        Trial::new(DMatrix::from_fn(c, t, |i, j| rows[i][j]), 100.0).unwrap()
    }

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    pub(crate) fn random_spd(rng: &mut ChaCha8Rng, c: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(c, c + 4, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(c, c) * 0.1
    }

    #[test]
    fn trial_covariance_examples() {
        assert_eq!(trial_covariance(&trial(&[&[1.0, 0.0], &[0.0, 2.0]])), diag(&[1.0, 4.0]));
        assert_eq!(trial_covariance(&trial(&[&[1.0, 1.0], &[1.0, -1.0]])), diag(&[2.0, 2.0]));
    }

    #[test]
    fn trial_covariance_matches_outer_product_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(4, 50, |_, _| rng.random_range(-3.0..3.0));
        let mut naive = DMatrix::<f64>::zeros(4, 4);
        for j in 0..50 {
            for a in 0..4 {
                for b in 0..4 {
                    naive[(a, b)] += x[(a, j)] * x[(b, j)];
                }
            }
        }
        let got = trial_covariance(&Trial::new(x, 100.0).unwrap());
        assert!((got - naive).norm() < 1e-12);
    }

    #[test]
    fn per_sample_scaling_divides_by_length() {
        let t = trial(&[&[1.0, 1.0], &[1.0, -1.0]]);
        assert_eq!(trial_covariance_scaled(&t, CovarianceScaling::PerSample), diag(&[1.0, 1.0]));
    }

    #[test]
    fn mean_covariance_examples() {
        let one = trial(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let m = mean_covariance([&one], MeanEstimator::Euclidean, 0.0).unwrap();
        assert_eq!(m.values(), &diag(&[4.0, 9.0]));

        let a = trial(&[&[1.0, 1.0], &[1.0, -1.0]]); // diag(2,2)
        let b = trial(&[&[2.0, 0.0], &[0.0, 2.0]]); // diag(4,4)
        let e = mean_covariance([&a, &b], MeanEstimator::Euclidean, 0.0).unwrap();
        assert!((e.values() - diag(&[3.0, 3.0])).norm() < 1e-12);
        let l = mean_covariance([&a, &b], MeanEstimator::LogEuclidean, 0.0).unwrap();
        let geo = ((2f64.ln() + 4f64.ln()) / 2.0).exp();
        assert_relative_eq!(geo, 8f64.sqrt(), epsilon = 1e-12);
        assert!((l.values() - diag(&[geo, geo])).norm() < 1e-12);
    }

    #[test]
    fn full_shrinkage_gives_scaled_identity() {
        let t = trial(&[&[1.0, 2.0, 0.5], &[0.0, -1.0, 3.0]]);
        let m = trial_covariance(&t);
        let s = mean_covariance([&t], MeanEstimator::Euclidean, 1.0).unwrap();
        assert!((s.values() - DMatrix::identity(2, 2) * (m.trace() / 2.0)).norm() < 1e-12);
        assert!(mean_covariance([&t], MeanEstimator::Euclidean, 1.5).is_err());
    }

    #[test]
    fn zero_data_is_degenerate() {
        let z = trial(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(
            mean_covariance([&z], MeanEstimator::Euclidean, 0.0),
            Err(Error::DegenerateCovariance(_))
        ));
        assert!(matches!(
            SpdMatrix::new(DMatrix::zeros(3, 3)),
            Err(Error::DegenerateCovariance(_))
        ));
    }

    #[test]
    fn ragged_trials_are_rejected() {
        let a = trial(&[&[1.0, 0.0], &[0.0, 2.0]]);
        let b = trial(&[&[1.0, 0.0, 1.0], &[0.0, 2.0, 1.0]]);
        assert!(matches!(
            mean_covariance([&a, &b], MeanEstimator::Euclidean, 0.0),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(SpdMatrix::new(m).is_err());
    }

    #[test]
    fn power_examples() {
        let m = SpdMatrix::new(diag(&[4.0, 9.0])).unwrap();
        assert!((invsqrt_spd(&m) - diag(&[0.5, 1.0 / 3.0])).norm() < 1e-14);
        assert!((sqrt_spd(&m) - diag(&[2.0, 3.0])).norm() < 1e-14);
        let i = SpdMatrix::new(DMatrix::identity(5, 5)).unwrap();
        assert!((invsqrt_spd(&i) - DMatrix::identity(5, 5)).norm() < 1e-14);
        assert!((sqrt_spd(&i) - DMatrix::identity(5, 5)).norm() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_clamped_not_rejected() {
        // channel-sum direction removed, as after common average referencing
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let s = SpdMatrix::new(m).unwrap();
        assert_eq!(s.clamped_count(), 1);
        let min = s.eigenvalues().min();
        assert_relative_eq!(min, 2.0 * DEFAULT_EIGEN_FLOOR, max_relative = 1e-6);
        let w = s.invsqrt();
        let id = &w * s.values() * &w;
        assert!(relative_frobenius(&id, &DMatrix::identity(2, 2)) < 1e-6);
    }

    #[test]
    fn random_power_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = SpdMatrix::new(random_spd(&mut rng, 8)).unwrap();
        let w = invsqrt_spd(&m);
        let r = sqrt_spd(&m);
        let id = DMatrix::identity(8, 8);
        assert!(relative_frobenius(&(&w * &w * m.values()), &id) < 1e-9);
        assert!(relative_frobenius(&(&r * &r), m.values()) < 1e-9);
        assert!((&w - w.transpose()).norm() <= 1e-12 * w.norm());
        assert!((&r - r.transpose()).norm() <= 1e-12 * r.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn invsqrt_times_sqrt_is_identity(seed in any::<u64>(), c in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = SpdMatrix::new(random_spd(&mut rng, c)).unwrap();
            let p = invsqrt_spd(&m) * sqrt_spd(&m);
            prop_assert!(relative_frobenius(&p, &DMatrix::identity(c, c)) < 1e-9);
        }

        #[test]
        fn invsqrt_scales_with_inverse_root(seed in any::<u64>(), c in 1usize..10, alpha in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_spd(&mut rng, c);
            let m = SpdMatrix::new(base.clone()).unwrap();
            let scaled = SpdMatrix::new(base * alpha).unwrap();
            let expected = invsqrt_spd(&m) / alpha.sqrt();
            prop_assert!(relative_frobenius(&invsqrt_spd(&scaled), &expected) < 1e-10);
        }

        #[test]
        fn means_are_permutation_invariant(seed in any::<u64>(), n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trials: Vec<Trial> = (0..n)
                .map(|_| Trial::new(DMatrix::from_fn(3, 20, |_, _| rng.random_range(-1.0..1.0)), 100.0).unwrap())
                .collect();
            let reversed: Vec<&Trial> = trials.iter().rev().collect();
            for est in [MeanEstimator::Euclidean, MeanEstimator::LogEuclidean] {
                let a = mean_covariance(&trials, est, 0.0).unwrap();
                let b = mean_covariance(reversed.iter().copied(), est, 0.0).unwrap();
                prop_assert!(relative_frobenius(a.values(), b.values()) < 1e-12);
            }
        }
    }
}
