//! Signal conditioning ahead of alignment: band-pass filtering, common average
//! referencing, epoching and downsampling.

pub mod filter;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassId, DomainSet, Trial};

pub use filter::{butter_bandpass, butter_lowpass, Biquad, Sos};

/// Anti-alias cutoff as a fraction of the output sampling rate.
pub const ANTI_ALIAS_FRACTION: f64 = 0.45;
pub const ANTI_ALIAS_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub zero_phase: bool,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        BandpassSpec {
            low_hz: 8.0,
            high_hz: 30.0,
            order: 4,
            zero_phase: true,
        }
    }
}

impl BandpassSpec {
    pub fn design(&self, sampling_rate: f64) -> Result<Sos> {
        butter_bandpass(self.order, self.low_hz, self.high_hz, sampling_rate)
    }
}

/// A continuous `channels × T` recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub data: DMatrix<f64>,
    pub sampling_rate: f64,
}

fn filter_rows(x: &DMatrix<f64>, sos: &Sos, zero_phase: bool) -> DMatrix<f64> {
    let mut out = x.clone();
    let mut row = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        if zero_phase {
            sos.filtfilt(&mut row);
        } else {
            sos.filter(&mut row);
        }
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    out
}

/// Filters every channel of `x` independently.
pub fn bandpass_matrix(x: &DMatrix<f64>, sampling_rate: f64, spec: &BandpassSpec) -> Result<DMatrix<f64>> {
    let sos = spec.design(sampling_rate)?;
    Ok(filter_rows(x, &sos, spec.zero_phase))
}

pub fn bandpass(trial: &Trial, spec: &BandpassSpec) -> Result<Trial> {
    let data = bandpass_matrix(trial.data(), trial.sampling_rate(), spec)?;
    Ok(trial.with_data(data))
}

pub fn bandpass_recording(rec: &Recording, spec: &BandpassSpec) -> Result<Recording> {
    Ok(Recording {
        data: bandpass_matrix(&rec.data, rec.sampling_rate, spec)?,
        sampling_rate: rec.sampling_rate,
    })
}

/// Per-trial filtering, for data that arrives already epoched.
pub fn bandpass_domain(d: &DomainSet, spec: &BandpassSpec) -> Result<DomainSet> {
    let sos = spec.design(d.sampling_rate())?;
    let trials = d
        .trials()
        .par_iter()
        .map(|t| t.with_data(filter_rows(t.data(), &sos, spec.zero_phase)))
        .collect();
    Ok(d.with_trials(trials))
}

/// Subtracts the across-channel mean from every sample.
pub fn car_matrix(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = x.nrows();
    if c < 2 {
        return Err(Error::TooFewChannels(c));
    }
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / c as f64;
        col.add_scalar_mut(-mean);
    }
    Ok(out)
}

pub fn car(trial: &Trial) -> Result<Trial> {
    Ok(trial.with_data(car_matrix(trial.data())?))
}

pub fn car_domain(d: &DomainSet) -> Result<DomainSet> {
    let trials = d.trials().iter().map(car).collect::<Result<Vec<_>>>()?;
    Ok(d.with_trials(trials))
}

/// Window relative to each cue onset, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSpec {
    pub start_s: f64,
    pub end_s: f64,
}

impl EpochSpec {
    fn sample_window(&self, sampling_rate: f64) -> Result<(i64, usize)> {
        if !(self.start_s.is_finite() && self.end_s.is_finite() && self.start_s < self.end_s) {
            return Err(Error::InvalidArgument(format!(
                "epoch window [{}, {}] must satisfy start < end",
                self.start_s, self.end_s
            )));
        }
        let offset = (self.start_s * sampling_rate).round() as i64;
        let len = ((self.end_s - self.start_s) * sampling_rate).round() as usize;
        if len == 0 {
            return Err(Error::InvalidArgument(format!(
                "epoch window [{}, {}] is shorter than one sample",
                self.start_s, self.end_s
            )));
        }
        Ok((offset, len))
    }
}

/// Cuts one trial per onset out of a continuous recording.
pub fn epoch(
    domain_id: &str,
    rec: &Recording,
    onsets: &[usize],
    labels: Option<Vec<ClassId>>,
    spec: &EpochSpec,
) -> Result<DomainSet> {
    let (offset, len) = spec.sample_window(rec.sampling_rate)?;
    let total = rec.data.ncols();
    let trials = onsets
        .iter()
        .map(|&onset| {
            let start = onset as i64 + offset;
            let end = start + len as i64;
            if start < 0 || end > total as i64 {
                return Err(Error::WindowOutOfRange {
                    onset,
                    start,
                    end,
                    len: total,
                });
            }
            let data = rec.data.columns(start as usize, len).into_owned();
            Trial::new(data, rec.sampling_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    DomainSet::new(domain_id, trials, labels)
}

/// Crops every trial of an epoched domain to `spec`, taking each trial's
/// first sample as the onset.
pub fn crop_domain(d: &DomainSet, spec: &EpochSpec) -> Result<DomainSet> {
    let trials = d
        .trials()
        .iter()
        .map(|t| {
            let rec = Recording {
                data: t.data().clone(),
                sampling_rate: t.sampling_rate(),
            };
            let one = epoch(d.domain_id(), &rec, &[0], None, spec)?;
            Ok(t.with_data(one.trials()[0].data().clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(d.with_trials(trials))
}

/// Anti-alias filters then keeps every `factor`-th sample.
pub fn downsample_matrix(x: &DMatrix<f64>, sampling_rate: f64, factor: usize) -> Result<(DMatrix<f64>, f64)> {
    if factor < 1 {
        return Err(Error::InvalidFactor(factor));
    }
    if factor == 1 {
        return Ok((x.clone(), sampling_rate));
    }
    let target = sampling_rate / factor as f64;
    let sos = butter_lowpass(ANTI_ALIAS_ORDER, ANTI_ALIAS_FRACTION * target, sampling_rate)?;
    let filtered = filter_rows(x, &sos, true);
    let len = x.ncols() / factor;
    let out = DMatrix::from_fn(x.nrows(), len, |i, j| filtered[(i, j * factor)]);
    Ok((out, target))
}

pub fn downsample(trial: &Trial, factor: usize) -> Result<Trial> {
    let (data, fs) = downsample_matrix(trial.data(), trial.sampling_rate(), factor)?;
    Ok(trial.with_data_and_rate(data, fs))
}

pub fn downsample_recording(rec: &Recording, factor: usize) -> Result<Recording> {
    let (data, sampling_rate) = downsample_matrix(&rec.data, rec.sampling_rate, factor)?;
    Ok(Recording { data, sampling_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(freq: f64, fs: f64, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(1, n, |_, j| (2.0 * PI * freq * j as f64 / fs).sin())
    }

    fn peak(x: &DMatrix<f64>, range: std::ops::Range<usize>) -> f64 {
        range.map(|j| x[(0, j)].abs()).fold(0.0, f64::max)
    }

    fn zero_phase_gain(spec: &BandpassSpec, f: f64, fs: f64) -> f64 {
        spec.design(fs).unwrap().magnitude(f, fs).powi(2)
    }

    #[test]
    fn dc_is_removed() {
        let x = DMatrix::from_element(2, 1000, 5.0);
        let y = bandpass_matrix(&x, 100.0, &BandpassSpec::default()).unwrap();
        assert!(peak(&y, 200..800) < 1e-3 * 5.0);
    }

    #[test]
    fn passband_sine_survives() {
        let spec = BandpassSpec::default();
        let oracle = zero_phase_gain(&spec, 15.0, 100.0);
        assert!((oracle - 1.0).abs() < 0.05, "oracle gain {oracle}");
        let y = bandpass_matrix(&sine(15.0, 100.0, 2000), 100.0, &spec).unwrap();
        let amp = peak(&y, 500..1500);
        assert!((amp - 1.0).abs() < 0.05, "amplitude {amp}");
        assert!((amp - oracle).abs() < 0.01);
    }

    #[test]
    fn stopband_sine_is_attenuated() {
        let spec = BandpassSpec::default();
        let oracle = zero_phase_gain(&spec, 45.0, 100.0);
        assert!(oracle < 0.1);
        let y = bandpass_matrix(&sine(45.0, 100.0, 2000), 100.0, &spec).unwrap();
        assert!(peak(&y, 500..1500) < 0.1);
    }

    #[test]
    fn zero_phase_has_no_delay() {
        let x = sine(15.0, 100.0, 2000);
        let y = bandpass_matrix(&x, 100.0, &BandpassSpec::default()).unwrap();
        // cross-correlation peaks at zero lag
        let lag_corr = |lag: i64| -> f64 {
            (500..1500)
                .map(|j| x[(0, j)] * y[(0, (j as i64 + lag) as usize)])
                .sum()
        };
        let best = (-3..=3).max_by(|a, b| lag_corr(*a).total_cmp(&lag_corr(*b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn causal_mode_runs() {
        let spec = BandpassSpec {
            zero_phase: false,
            ..BandpassSpec::default()
        };
        let y = bandpass_matrix(&sine(15.0, 100.0, 1000), 100.0, &spec).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
        let amp = peak(&y, 500..1000);
        assert!((amp - spec.design(100.0).unwrap().magnitude(15.0, 100.0)).abs() < 0.01);
    }

    #[test]
    fn bad_band_is_rejected() {
        let spec = BandpassSpec {
            low_hz: 8.0,
            high_hz: 60.0,
            ..BandpassSpec::default()
        };
        assert!(matches!(
            bandpass_matrix(&sine(1.0, 100.0, 10), 100.0, &spec),
            Err(Error::InvalidBand { .. })
        ));
    }

    #[test]
    fn car_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert_eq!(car_matrix(&x).unwrap(), DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        let z = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, -1.0, 2.0, -0.5]);
        assert_eq!(car_matrix(&z).unwrap(), z);
        assert!(matches!(car_matrix(&DMatrix::zeros(1, 4)), Err(Error::TooFewChannels(1))));
    }

    #[test]
    fn epoch_lengths_and_bounds() {
        let rec = Recording {
            data: DMatrix::from_fn(3, 1000, |i, j| (i * 1000 + j) as f64),
            sampling_rate: 100.0,
        };
        let spec = EpochSpec { start_s: 0.5, end_s: 3.5 };
        let d = epoch("s", &rec, &[0, 100, 600], None, &spec).unwrap();
        assert_eq!(d.samples(), 300);
        assert_eq!(d.trials()[1].data()[(0, 0)], 150.0);
        let tiny = epoch("s", &rec, &[10], None, &EpochSpec { start_s: 0.0, end_s: 0.01 }).unwrap();
        assert_eq!(tiny.samples(), 1);
        assert!(matches!(
            epoch("s", &rec, &[990], None, &spec),
            Err(Error::WindowOutOfRange { onset: 990, .. })
        ));
        assert!(epoch("s", &rec, &[0], None, &EpochSpec { start_s: 1.0, end_s: 1.0 }).is_err());
    }

    #[test]
    fn epochs_concatenate_back_to_source_samples() {
        let rec = Recording {
            data: DMatrix::from_fn(2, 900, |i, j| ((i + 1) * j) as f64 * 0.37),
            sampling_rate: 100.0,
        };
        let spec = EpochSpec { start_s: 0.0, end_s: 3.0 };
        let d = epoch("s", &rec, &[0, 300, 600], None, &spec).unwrap();
        let mut joined = DMatrix::zeros(2, 900);
        for (k, t) in d.trials().iter().enumerate() {
            joined.columns_mut(k * 300, 300).copy_from(t.data());
        }
        assert_eq!(joined, rec.data);
    }

    #[test]
    fn downsample_examples() {
        let x = sine(10.0, 1000.0, 4000);
        let (same, fs) = downsample_matrix(&x, 1000.0, 1).unwrap();
        assert_eq!((same, fs), (x.clone(), 1000.0));
        let (y, fs) = downsample_matrix(&x, 1000.0, 10).unwrap();
        assert_eq!(fs, 100.0);
        assert_eq!(y.ncols(), 400);
        let (odd, _) = downsample_matrix(&sine(10.0, 1000.0, 4009), 1000.0, 10).unwrap();
        assert_eq!(odd.ncols(), 400);
        assert!(matches!(downsample_matrix(&x, 1000.0, 0), Err(Error::InvalidFactor(0))));
    }

    #[test]
    fn downsample_keeps_passband_and_rejects_alias() {
        let target = 100.0;
        let sos = butter_lowpass(ANTI_ALIAS_ORDER, ANTI_ALIAS_FRACTION * target, 1000.0).unwrap();
        let energy = |f: f64| -> f64 {
            let (y, _) = downsample_matrix(&sine(f, 1000.0, 10_000), 1000.0, 10).unwrap();
            let mid = 200..800;
            mid.clone().map(|j| y[(0, j)].powi(2)).sum::<f64>() / mid.len() as f64 / 0.5
        };
        let e35 = energy(35.0);
        assert!((e35 - 1.0).abs() < 0.05, "35 Hz energy {e35}");
        assert!((e35 - sos.magnitude(35.0, 1000.0).powi(4)).abs() < 0.01);
        let e80 = energy(80.0);
        assert!(e80 < 0.1, "80 Hz energy {e80}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn bandpass_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(3, 300, |_, _| rng.random_range(-1.0..1.0));
            let y = DMatrix::from_fn(3, 300, |_, _| rng.random_range(-1.0..1.0));
            let spec = BandpassSpec::default();
            let lhs = bandpass_matrix(&(&x * a + &y * b), 100.0, &spec).unwrap();
            let rhs = bandpass_matrix(&x, 100.0, &spec).unwrap() * a + bandpass_matrix(&y, 100.0, &spec).unwrap() * b;
            prop_assert!((&lhs - &rhs).norm() <= 1e-9 * rhs.norm().max(1e-300));
        }

        #[test]
        fn car_is_a_projection_commuting_with_bandpass(seed in any::<u64>(), c in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(c, 300, |_, _| rng.random_range(-5.0..5.0));
            let once = car_matrix(&x).unwrap();
            prop_assert!((car_matrix(&once).unwrap() - &once).norm() <= 1e-12 * once.norm());
            for col in once.column_iter() {
                prop_assert!(col.sum().abs() < 1e-12);
            }
            let spec = BandpassSpec::default();
            let a = car_matrix(&bandpass_matrix(&x, 100.0, &spec).unwrap()).unwrap();
            let b = bandpass_matrix(&once, 100.0, &spec).unwrap();
            prop_assert!((&a - &b).norm() <= 1e-9 * b.norm());
        }
    }
}
