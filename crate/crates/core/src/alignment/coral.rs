//! Correlation alignment of feature vectors.
//!
//! Features are rows (`n × d`). Covariances are mean-centred with `n - 1`
//! normalisation and eigen-floored. The map `W = Cₛ^{-1/2} Cₜ^{1/2}` is the
//! closed-form zero of `‖Wᵀ Cₛ W − Cₜ‖²_F`, applied as `X W`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::{symmetrize, SpdMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CoralTransform {
    map: DMatrix<f64>,
    source_cov: SpdMatrix,
    target_cov: SpdMatrix,
}

impl CoralTransform {
    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    pub fn source_cov(&self) -> &SpdMatrix {
        &self.source_cov
    }

    pub fn target_cov(&self) -> &SpdMatrix {
        &self.target_cov
    }

    pub fn dim(&self) -> usize {
        self.map.nrows()
    }

    /// `‖Wᵀ Cₛ W − Cₜ‖²_F` for an arbitrary `W`.
    pub fn objective(&self, w: &DMatrix<f64>) -> f64 {
        coral_objective(w, self.source_cov.values(), self.target_cov.values())
    }
}

pub fn coral_objective(w: &DMatrix<f64>, source_cov: &DMatrix<f64>, target_cov: &DMatrix<f64>) -> f64 {
    (w.transpose() * source_cov * w - target_cov).norm_squared()
}

/// Mean-centred sample covariance of the rows of `features`.
pub fn feature_covariance(features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "feature covariance needs at least 2 samples, got {n}"
        )));
    }
    let mean = features.row_mean();
    let mut centred = features.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    Ok(symmetrize(centred.transpose() * &centred / (n - 1) as f64))
}

pub fn fit_coral(source_features: &DMatrix<f64>, target_features: &DMatrix<f64>) -> Result<CoralTransform> {
    let d = source_features.ncols();
    if d == 0 {
        return Err(Error::InvalidArgument("features have no columns".into()));
    }
    if target_features.ncols() != d {
        return Err(Error::shape(
            format!("{d} feature columns"),
            format!("{} feature columns", target_features.ncols()),
        ));
    }
    let source_cov = SpdMatrix::new(feature_covariance(source_features)?)?;
    let target_cov = SpdMatrix::new(feature_covariance(target_features)?)?;
    let map = source_cov.invsqrt() * target_cov.sqrt();
    Ok(CoralTransform {
        map,
        source_cov,
        target_cov,
    })
}

pub fn apply_coral(t: &CoralTransform, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if features.ncols() != t.dim() {
        return Err(Error::shape(
            format!("{} feature columns", t.dim()),
            format!("{} feature columns", features.ncols()),
        ));
    }
    Ok(features * &t.map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::relative_frobenius;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(rng: &mut ChaCha8Rng, n: usize, mix: &DMatrix<f64>) -> DMatrix<f64> {
        let d = mix.nrows();
        let z = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        z * mix
    }

    #[test]
    fn equal_covariances_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample(&mut rng, 50, &DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 2.0]));
        let t = fit_coral(&x, &x).unwrap();
        assert!((t.map() - DMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn scaled_identity_case() {
        // rows ±2 and ±1 in a balanced design: Cs = 4 s I, Ct = s I
        let base = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let t = fit_coral(&(&base * 2.0), &base).unwrap();
        assert!((t.map() - DMatrix::identity(2, 2) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn transformed_source_covariance_matches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ms = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(4, 4);
        let mt = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(4, 4) * 2.0;
        let xs = sample(&mut rng, 200, &ms);
        let xt = sample(&mut rng, 150, &mt);
        let t = fit_coral(&xs, &xt).unwrap();
        let moved = apply_coral(&t, &xs).unwrap();
        let got = feature_covariance(&moved).unwrap();
        assert!(relative_frobenius(&got, t.target_cov().values()) < 1e-6);
        assert!(t.objective(t.map()).sqrt() < 1e-6 * t.target_cov().values().norm());
    }

    /// Plain gradient descent on the CORAL objective with backtracking.
    fn gradient_oracle(cs: &DMatrix<f64>, ct: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
        let d = cs.nrows();
        let mut w = DMatrix::identity(d, d);
        let mut step = 0.1;
        for _ in 0..steps {
            let residual = w.transpose() * cs * &w - ct;
            let grad = cs * &w * &residual * 4.0;
            let f0 = coral_objective(&w, cs, ct);
            loop {
                let cand = &w - &grad * step;
                if coral_objective(&cand, cs, ct) <= f0 || step < 1e-12 {
                    w = cand;
                    break;
                }
                step *= 0.5;
            }
            step *= 1.5;
        }
        w
    }

    #[test]
    fn closed_form_beats_gradient_oracle() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let ms = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(3, 3);
            let mt = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(3, 3);
            let xs = sample(&mut rng, 60, &ms);
            let xt = sample(&mut rng, 60, &mt);
            let t = fit_coral(&xs, &xt).unwrap();
            let oracle = gradient_oracle(t.source_cov().values(), t.target_cov().values(), 200);
            assert!(t.objective(t.map()) <= t.objective(&oracle) + 1e-6);
        }
    }

    #[test]
    fn errors() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(fit_coral(&x, &x).is_err());
        let a = DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64 + (i * i) as f64);
        let b = DMatrix::from_fn(5, 3, |i, j| (i + j) as f64);
        assert!(matches!(fit_coral(&a, &b), Err(Error::ShapeMismatch { .. })));
        let constant = DMatrix::from_element(5, 2, 3.0);
        assert!(matches!(fit_coral(&constant, &a), Err(Error::DegenerateCovariance(_))));
        let t = fit_coral(&a, &a).unwrap();
        assert!(apply_coral(&t, &b).is_err());
    }
}
