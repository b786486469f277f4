//! Synthetic multi-subject recordings with a controllable linear shift.
//!
//! Each subject observes the same latent generative process through its own
//! channel mixing: `X = A_s S + P_s I + N`, where `S` holds one source per
//! channel (band-limited activity whose power depends on the class plus a
//! broadband background, all mutually uncorrelated within every trial),
//! `A_s = I + σ E_s` with `E_s` a random symmetric perturbation, `P_s I` is
//! optional out-of-band interference with subject-specific spatial patterns,
//! and `N` is white sensor noise.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_json::MatrixJson;
use crate::model::{ClassId, DomainSet, Trial};
use crate::preprocess::{butter_bandpass, Sos};
use crate::spd::{raw_mean_covariance, SpdMatrix};

const SOURCE_FILTER_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterferenceSpec {
    /// Standard deviation of each interference source.
    pub amplitude: f64,
    pub bands: Vec<(f64, f64)>,
    /// Log-normal spread of the per-trial interference gain.
    pub trial_jitter: f64,
}

impl Default for InterferenceSpec {
    fn default() -> Self {
        InterferenceSpec {
            amplitude: 4.0,
            bands: vec![(1.0, 5.0), (40.0, 55.0)],
            trial_jitter: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub n_subjects: usize,
    pub channels: usize,
    pub samples: usize,
    pub trials_per_class: usize,
    pub classes: Vec<ClassId>,
    pub sampling_rate: f64,
    pub shift_strength: f64,
    pub noise_level: f64,
    /// Band of the class-discriminative activity.
    pub band: (f64, f64),
    /// Standard deviation of the in-band activity of every source.
    pub band_level: f64,
    /// In-band standard deviation multiplier of a class's own source.
    pub class_contrast: f64,
    /// Standard deviation of the broadband part of every source.
    pub background_level: f64,
    pub interference: Option<InterferenceSpec>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            n_subjects: 5,
            channels: 8,
            samples: 256,
            trials_per_class: 60,
            classes: vec!["left".into(), "right".into()],
            sampling_rate: 128.0,
            shift_strength: 0.5,
            noise_level: 0.1,
            band: (8.0, 30.0),
            band_level: 1.0,
            class_contrast: 1.5,
            background_level: 0.5,
            interference: None,
            seed: 7,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_subjects == 0 || self.channels == 0 || self.samples == 0 || self.trials_per_class == 0 {
            return bad("subject, channel, sample and trial counts must be at least 1".into());
        }
        if self.classes.is_empty() {
            return bad("at least one class is required".into());
        }
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return bad("class names must be distinct".into());
        }
        if self.classes.len() > self.channels {
            return bad(format!(
                "{} classes need at least as many channels, got {}",
                self.classes.len(),
                self.channels
            ));
        }
        let levels = [
            ("shift_strength", self.shift_strength),
            ("noise_level", self.noise_level),
            ("band_level", self.band_level),
            ("class_contrast", self.class_contrast),
            ("background_level", self.background_level),
        ];
        for (name, v) in levels {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.sampling_rate.is_finite() && self.sampling_rate > 0.0) {
            return bad("sampling_rate must be positive".into());
        }
        butter_bandpass(SOURCE_FILTER_ORDER, self.band.0, self.band.1, self.sampling_rate)?;
        if let Some(int) = &self.interference {
            if !(int.amplitude >= 0.0 && int.trial_jitter >= 0.0) {
                return bad("interference amplitude and jitter must be non-negative".into());
            }
            for (lo, hi) in &int.bands {
                butter_bandpass(SOURCE_FILTER_ORDER, *lo, *hi, self.sampling_rate)?;
            }
        }
        Ok(())
    }

    /// In-band standard deviation of every source for one class.
    pub fn source_profile(&self, class_index: usize) -> Vec<f64> {
        (0..self.channels)
            .map(|i| {
                if i == class_index {
                    self.band_level * self.class_contrast
                } else {
                    self.band_level
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub domain_id: String,
    pub mixing: MatrixJson,
    pub interference_patterns: Option<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: GeneratorSpec,
    pub source_profiles: BTreeMap<ClassId, Vec<f64>>,
    pub subjects: Vec<SubjectTruth>,
}

/// Band-limited unit-variance noise generator.
struct BandNoise {
    sos: Sos,
    scale: f64,
}

impl BandNoise {
    fn new(low: f64, high: f64, fs: f64) -> Result<Self> {
        let sos = butter_bandpass(SOURCE_FILTER_ORDER, low, high, fs)?;
        // forward-backward power gain of white noise: mean of |H|⁴ over [0, fs/2]
        let grid = 4096;
        let gain = (0..grid)
            .map(|k| sos.magnitude((k as f64 + 0.5) / grid as f64 * fs / 2.0, fs).powi(4))
            .sum::<f64>()
            / grid as f64;
        Ok(BandNoise {
            sos,
            scale: gain.sqrt().recip(),
        })
    }

    fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        self.sos.filtfilt(out);
        for v in out.iter_mut() {
            *v *= self.scale;
        }
    }
}

/// Makes the rows exactly uncorrelated while keeping each row's energy.
///
/// Uses the symmetric orthogonalisation `(MMᵀ)^{-1/2} M`, the closest set of
/// orthonormal rows to `M`; left untouched when rows outnumber half the
/// samples, where the correction would no longer be small.
fn decorrelate_rows(m: &mut DMatrix<f64>) {
    if 2 * m.nrows() > m.ncols() {
        return;
    }
    let norms: Vec<f64> = m.row_iter().map(|r| r.norm()).collect();
    let Ok(gram) = SpdMatrix::new(crate::spd::gram(m)) else {
        return;
    };
    if gram.clamped_count() > 0 {
        return;
    }
    let mut q = gram.invsqrt() * &*m;
    for (mut r, n) in q.row_iter_mut().zip(norms) {
        r *= n;
    }
    *m = q;
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64 + 1);
    rng
}

fn random_mixing(rng: &mut ChaCha8Rng, c: usize, sigma: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(c, c, |_, _| rng.sample::<f64, _>(StandardNormal) / (c as f64).sqrt());
    let e = (&g + g.transpose()) * 0.5;
    DMatrix::identity(c, c) + e * sigma
}

fn generate_subject(
    spec: &GeneratorSpec,
    subject: usize,
    band: &BandNoise,
    interference: &[BandNoise],
) -> (DomainSet, SubjectTruth) {
    let (c, t) = (spec.channels, spec.samples);
    let mut rng = subject_rng(spec.seed, subject);
    let mixing = random_mixing(&mut rng, c, spec.shift_strength);
    let patterns = spec.interference.as_ref().map(|_| {
        let raw = DMatrix::from_fn(c, interference.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut p = raw;
        for mut col in p.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n / (c as f64).sqrt();
            }
        }
        p
    });

    let mut labels: Vec<usize> = (0..spec.classes.len())
        .flat_map(|k| std::iter::repeat_n(k, spec.trials_per_class))
        .collect();
    labels.shuffle(&mut rng);
    let profiles: Vec<Vec<f64>> = (0..spec.classes.len()).map(|k| spec.source_profile(k)).collect();

    let mut row = vec![0.0; t];
    let trials = labels
        .iter()
        .map(|&k| {
            let mut parts = DMatrix::zeros(2 * c, t);
            for i in 0..c {
                band.fill(&mut rng, &mut row);
                parts.row_mut(i).copy_from_slice(&row);
            }
            for v in parts.rows_mut(c, c).iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            decorrelate_rows(&mut parts);
            let mut s = DMatrix::zeros(c, t);
            for i in 0..c {
                for j in 0..t {
                    s[(i, j)] = profiles[k][i] * parts[(i, j)] + spec.background_level * parts[(c + i, j)];
                }
            }
            let mut x = &mixing * s;
            if let (Some(int), Some(p)) = (&spec.interference, &patterns) {
                for (q, src) in interference.iter().enumerate() {
                    let jitter: f64 = rng.sample(StandardNormal);
                    let gain = int.amplitude * (int.trial_jitter * jitter).exp();
                    src.fill(&mut rng, &mut row);
                    for i in 0..c {
                        for j in 0..t {
                            x[(i, j)] += p[(i, q)] * gain * row[j];
                        }
                    }
                }
            }
            if spec.noise_level > 0.0 {
                for v in x.iter_mut() {
                    *v += spec.noise_level * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Trial::new(x, spec.sampling_rate).expect("generator produces non-empty trials")
        })
        .collect();
    let class_labels = labels.iter().map(|&k| spec.classes[k].clone()).collect();
    let domain_id = format!("S{:02}", subject + 1);
    let domain = DomainSet::from_parts_unchecked(domain_id.clone(), trials, Some(class_labels));
    let truth = SubjectTruth {
        domain_id,
        mixing: (&mixing).into(),
        interference_patterns: patterns.as_ref().map(Into::into),
    };
    (domain, truth)
}

/// Generates one labelled domain per subject. Subjects draw from independent
/// random substreams, so the result does not depend on thread scheduling.
pub fn generate(spec: &GeneratorSpec) -> Result<(Vec<DomainSet>, GroundTruth)> {
    spec.validate()?;
    let band = BandNoise::new(spec.band.0, spec.band.1, spec.sampling_rate)?;
    let interference = match &spec.interference {
        Some(int) => int
            .bands
            .iter()
            .map(|(lo, hi)| BandNoise::new(*lo, *hi, spec.sampling_rate))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let (domains, subjects): (Vec<_>, Vec<_>) = (0..spec.n_subjects)
        .into_par_iter()
        .map(|s| generate_subject(spec, s, &band, &interference))
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    let source_profiles = spec
        .classes
        .iter()
        .enumerate()
        .map(|(k, name)| (name.clone(), spec.source_profile(k)))
        .collect();
    Ok((
        domains,
        GroundTruth {
            spec: spec.clone(),
            source_profiles,
            subjects,
        },
    ))
}

/// Mean pairwise Frobenius distance between the domains' raw mean covariances.
pub fn discrepancy(domains: &[DomainSet]) -> Result<f64> {
    if domains.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "discrepancy needs at least 2 domains, got {}",
            domains.len()
        )));
    }
    let c = domains[0].channels();
    let means = domains
        .iter()
        .map(|d| {
            if d.channels() != c {
                return Err(Error::shape(format!("{c} channels"), format!("{} channels", d.channels())));
            }
            raw_mean_covariance(d.trials()).ok_or(Error::EmptyState)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            total += (&means[i] - &means[j]).norm();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}
