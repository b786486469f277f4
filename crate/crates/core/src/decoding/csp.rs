//! Shrinkage-regularised common spatial patterns.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{ClassId, Trial};
use crate::spd::{gram, shrink, SpdMatrix};

pub const DEFAULT_CSP_SHRINKAGE: f64 = 0.05;
pub const DEFAULT_FILTERS_PER_SIDE: usize = 3;

/// Spatial filters as rows. The first `n_per_side` rows maximise variance of
/// the first class, the last `n_per_side` that of the second.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFilterBank {
    filters: DMatrix<f64>,
    n_per_side: usize,
    class_order: (ClassId, ClassId),
    spectrum: Vec<f64>,
}

impl SpatialFilterBank {
    pub fn new(
        filters: DMatrix<f64>,
        n_per_side: usize,
        class_order: (ClassId, ClassId),
        spectrum: Vec<f64>,
    ) -> Result<Self> {
        if filters.nrows() != 2 * n_per_side || filters.nrows() > filters.ncols() {
            return Err(Error::shape(
                format!("{} filters over at least as many channels", 2 * n_per_side),
                format!("{}x{}", filters.nrows(), filters.ncols()),
            ));
        }
        if filters.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("spatial filters contain non-finite values".into()));
        }
        Ok(SpatialFilterBank {
            filters,
            n_per_side,
            class_order,
            spectrum,
        })
    }

    pub fn filters(&self) -> &DMatrix<f64> {
        &self.filters
    }

    pub fn n_per_side(&self) -> usize {
        self.n_per_side
    }

    pub fn class_order(&self) -> &(ClassId, ClassId) {
        &self.class_order
    }

    /// Every generalised eigenvalue, descending.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn channels(&self) -> usize {
        self.filters.ncols()
    }

    pub fn apply(&self, trial: &Trial) -> Result<Trial> {
        if trial.channels() != self.channels() {
            return Err(Error::shape(
                format!("{} channels", self.channels()),
                format!("{} channels", trial.channels()),
            ));
        }
        Ok(trial.with_data(&self.filters * trial.data()))
    }
}

fn class_sum(trials: &[&Trial], shape: (usize, usize)) -> Result<DMatrix<f64>> {
    if trials.is_empty() {
        return Err(Error::EmptyClass);
    }
    let mut sum = DMatrix::zeros(shape.0, shape.0);
    for t in trials {
        if (t.channels(), t.samples()) != shape {
            return Err(Error::shape(
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", t.channels(), t.samples()),
            ));
        }
        sum += gram(t.data());
    }
    Ok(sum / trials.len() as f64)
}

/// Makes the largest-magnitude entry of each row positive.
fn canonical_sign(filters: &mut DMatrix<f64>) {
    for mut row in filters.row_iter_mut() {
        let (mut best, mut idx) = (0.0, 0);
        for (j, v) in row.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = j;
            }
        }
        if row[idx] < 0.0 {
            row.neg_mut();
        }
    }
}

/// Fits filters discriminating `class_a` from `class_b`.
///
/// Class covariances are the mean trial covariances, normalised by one common
/// factor so their traces average to 1, then each is shrunk by `gamma`
/// toward `(tr/c) I`. Filters solve `Cₐ w = λ (Cₐ + C_b) w` and are scaled so
/// that `wᵀ(Cₐ + C_b)w = 1` with the class covariances back in data units,
/// which keeps log-variance features unchanged under channel mixing.
pub fn fit_csp(
    class_a: &[&Trial],
    class_b: &[&Trial],
    n_per_side: usize,
    gamma: f64,
    class_order: (ClassId, ClassId),
) -> Result<SpatialFilterBank> {
    let first = class_a.first().or(class_b.first()).ok_or(Error::EmptyClass)?;
    let (c, t) = (first.channels(), first.samples());
    if n_per_side == 0 || 2 * n_per_side > c {
        return Err(Error::InvalidArgument(format!(
            "{n_per_side} filters per side do not fit {c} channels"
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("CSP shrinkage {gamma} outside [0, 1]")));
    }
    let ca = class_sum(class_a, (c, t))?;
    let cb = class_sum(class_b, (c, t))?;
    let scale = (ca.trace() + cb.trace()) / 2.0;
    if scale <= 0.0 {
        return Err(Error::DegenerateCovariance("both classes carry zero power"));
    }
    let ca = shrink(&(ca / scale), gamma);
    let cb = shrink(&(cb / scale), gamma);

    let composite = SpdMatrix::new(&ca + &cb)?;
    let whiten = composite.invsqrt();
    let eig = SymmetricEigen::new(crate::spd::symmetrize(&whiten * &ca * &whiten));
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let picks: Vec<usize> = order[..n_per_side]
        .iter()
        .chain(&order[c - n_per_side..])
        .copied()
        .collect();
    let unit = scale.sqrt().recip();
    let mut filters = DMatrix::zeros(picks.len(), c);
    for (r, &i) in picks.iter().enumerate() {
        let w = &whiten * eig.eigenvectors.column(i) * unit;
        filters.row_mut(r).copy_from(&w.transpose());
    }
    canonical_sign(&mut filters);
    SpatialFilterBank::new(filters, n_per_side, class_order, spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn order() -> (ClassId, ClassId) {
        ("a".into(), "b".into())
    }

    fn gaussian_trials(rng: &mut ChaCha8Rng, n: usize, stds: &[f64], t: usize) -> Vec<Trial> {
        (0..n)
            .map(|_| {
                let x = DMatrix::from_fn(stds.len(), t, |i, _| stds[i] * rng.sample::<f64, _>(StandardNormal));
                Trial::new(x, 100.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn diagonal_pair_gives_axis_filters() {
        // deterministic trials with XXᵀ exactly diag(10,1) and diag(1,10)
        let a = Trial::new(DMatrix::from_row_slice(2, 2, &[10f64.sqrt(), 0.0, 0.0, 1.0]), 100.0).unwrap();
        let b = Trial::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10f64.sqrt()]), 100.0).unwrap();
        let bank = fit_csp(&[&a], &[&b], 1, 0.0, order()).unwrap();
        let f = bank.filters();
        let cos = |r: usize, axis: usize| f[(r, axis)].abs() / f.row(r).norm();
        assert!(cos(0, 0) > 0.999);
        assert!(cos(1, 1) > 0.999);
        assert!((bank.spectrum()[0] - 10.0 / 11.0).abs() < 1e-12);
        assert!(f[(0, 0)] > 0.0 && f[(1, 1)] > 0.0);
    }

    #[test]
    fn full_shrinkage_is_degenerate_but_fine() {
        let a = Trial::new(DMatrix::from_row_slice(2, 2, &[10f64.sqrt(), 0.0, 0.0, 1.0]), 100.0).unwrap();
        let b = Trial::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10f64.sqrt()]), 100.0).unwrap();
        let bank = fit_csp(&[&a], &[&b], 1, 1.0, order()).unwrap();
        for v in bank.spectrum() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        let f = bank.filters();
        assert!(f.row(0).dot(&f.row(1)).abs() < 1e-12);
        assert!((f.row(0).norm() - f.row(1).norm()).abs() < 1e-12);
    }

    #[test]
    fn identical_classes_have_flat_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stds = [1.0, 2.0, 0.5, 1.5];
        let a = gaussian_trials(&mut rng, 200, &stds, 100);
        let b = gaussian_trials(&mut rng, 200, &stds, 100);
        let ra: Vec<&Trial> = a.iter().collect();
        let rb: Vec<&Trial> = b.iter().collect();
        let bank = fit_csp(&ra, &rb, 2, 0.0, order()).unwrap();
        let s = bank.spectrum();
        assert!(s[0] - s[s.len() - 1] < 0.05, "spread {:?}", s);
        assert!(s.iter().all(|v| (v - 0.5).abs() < 0.05));
    }

    #[test]
    fn filters_are_normalised_in_composite_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian_trials(&mut rng, 30, &[3.0, 1.0, 1.0, 0.5], 60);
        let b = gaussian_trials(&mut rng, 30, &[1.0, 1.0, 2.0, 0.5], 60);
        let ra: Vec<&Trial> = a.iter().collect();
        let rb: Vec<&Trial> = b.iter().collect();
        let bank = fit_csp(&ra, &rb, 2, 0.0, order()).unwrap();
        let ca = class_sum(&ra, (4, 60)).unwrap();
        let cb = class_sum(&rb, (4, 60)).unwrap();
        let composite = ca + cb;
        for r in 0..4 {
            let w = bank.filters().row(r).transpose();
            assert!(((w.transpose() * &composite * &w)[(0, 0)] - 1.0).abs() < 1e-10);
        }
        let s = bank.spectrum();
        assert!(s.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn errors() {
        let a = Trial::new(DMatrix::identity(3, 5), 100.0).unwrap();
        let wide = Trial::new(DMatrix::identity(4, 5), 100.0).unwrap();
        assert!(matches!(fit_csp(&[], &[&a], 1, 0.0, order()), Err(Error::EmptyClass)));
        assert!(matches!(fit_csp(&[&a], &[], 1, 0.0, order()), Err(Error::EmptyClass)));
        assert!(matches!(fit_csp(&[&a], &[&wide], 1, 0.0, order()), Err(Error::ShapeMismatch { .. })));
        assert!(fit_csp(&[&a], &[&a], 2, 0.0, order()).is_err());
        assert!(fit_csp(&[&a], &[&a], 1, 1.5, order()).is_err());
    }
}
