//! Butterworth IIR design as cascaded second-order sections.
//!
//! Design follows the analog prototype route: Butterworth poles on the unit
//! circle, frequency transform, then the bilinear transform with prewarped
//! edges. Sections run in transposed direct form II.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One second-order section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2]) / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// State that makes a constant unit input produce a constant output.
    fn step_state(&self) -> [f64; 2] {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2]);
        let z2 = self.b[2] - self.a[2] * gain;
        let z1 = self.b[1] - self.a[1] * gain + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// A cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<Biquad>,
    order: usize,
}

impl Sos {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Number of poles in the digital filter.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sampling_rate: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sampling_rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq_hz: f64, sampling_rate: f64) -> f64 {
        self.response(freq_hz, sampling_rate).norm()
    }

    /// Causal filtering in place, starting from `state` (two values per section).
    fn run(&self, x: &mut [f64], state: &mut [[f64; 2]]) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let [mut z1, mut z2] = *z;
            for v in x.iter_mut() {
                let input = *v;
                let y = b0 * input + z1;
                z1 = b1 * input - a1 * y + z2;
                z2 = b2 * input - a2 * y;
                *v = y;
            }
            *z = [z1, z2];
        }
    }

    /// Single causal pass from rest.
    pub fn filter(&self, x: &mut [f64]) {
        let mut state = vec![[0.0; 2]; self.sections.len()];
        self.run(x, &mut state);
    }

    /// Per-section initial state for a unit step, accounting for the gain of
    /// the sections in front of each one.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let [z1, z2] = s.step_state();
                let out = [z1 * scale, z2 * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    /// Forward-backward filtering with zero group delay.
    ///
    /// Ends are extended by odd reflection over `3 * order` samples (capped by
    /// the signal length) and each pass starts from the steady state of its
    /// first extended sample; the extension is trimmed afterwards.
    pub fn filtfilt(&self, x: &mut [f64]) {
        let n = x.len();
        if n == 0 {
            return;
        }
        let pad = (3 * self.order).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let zi = self.step_states();
        let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * ext[0], z[1] * ext[0]]).collect();
        self.run(&mut ext, &mut state);
        ext.reverse();
        let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * ext[0], z[1] * ext[0]]).collect();
        self.run(&mut ext, &mut state);
        ext.reverse();
        x.copy_from_slice(&ext[pad..pad + n]);
    }
}

fn prototype_poles(order: usize) -> Vec<Complex64> {
    let n = order as f64;
    (0..order)
        .map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n)))
        .collect()
}

fn bilinear(s: Complex64, k: f64) -> Complex64 {
    (k + s) / (k - s)
}

/// Groups digital poles into conjugate pairs and leftover real poles.
fn pole_sections(poles: &[Complex64]) -> (Vec<[f64; 3]>, Vec<f64>) {
    const IM_EPS: f64 = 1e-12;
    let mut quadratics = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > IM_EPS {
            quadratics.push([1.0, -2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= IM_EPS {
            reals.push(p.re);
        }
    }
    (quadratics, reals)
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order > 32 {
        return Err(Error::InvalidArgument(format!("filter order {order} outside 1..=32")));
    }
    Ok(())
}

/// Band-pass Butterworth of prototype order `order` (the digital filter has
/// `2 * order` poles). Unit gain at the geometric band centre.
pub fn butter_bandpass(order: usize, low_hz: f64, high_hz: f64, sampling_rate: f64) -> Result<Sos> {
    check_order(order)?;
    let nyquist = sampling_rate / 2.0;
    let invalid = |reason| Error::InvalidBand {
        low_hz,
        high_hz,
        sampling_rate,
        reason,
    };
    if !(low_hz.is_finite() && high_hz.is_finite() && sampling_rate.is_finite()) {
        return Err(invalid("non-finite edge"));
    }
    if low_hz <= 0.0 {
        return Err(invalid("low edge must be positive"));
    }
    if low_hz >= high_hz {
        return Err(invalid("low edge must be below high edge"));
    }
    if high_hz >= nyquist {
        return Err(invalid("high edge must be below Nyquist"));
    }
    let k = 2.0 * sampling_rate;
    let wl = k * (PI * low_hz / sampling_rate).tan();
    let wh = k * (PI * high_hz / sampling_rate).tan();
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    let mut poles = Vec::with_capacity(2 * order);
    for p in prototype_poles(order) {
        let a = p * (bw / 2.0);
        let d = (a * a - w0 * w0).sqrt();
        poles.push(bilinear(a + d, k));
        poles.push(bilinear(a - d, k));
    }
    let (quadratics, reals) = pole_sections(&poles);
    let mut sections: Vec<Biquad> = quadratics
        .into_iter()
        .map(|a| Biquad { b: [1.0, 0.0, -1.0], a })
        .collect();
    for pair in reals.chunks(2) {
        let (r1, r2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -(r1 + r2), r1 * r2],
        });
    }
    debug_assert_eq!(sections.len(), order);

    let mut sos = Sos {
        sections,
        order: 2 * order,
    };
    let centre = 2.0 * (w0 / k).atan() * sampling_rate / (2.0 * PI);
    let gain = sos.magnitude(centre, sampling_rate);
    normalize_gain(&mut sos, gain);
    Ok(sos)
}

/// Low-pass Butterworth of order `order`, unit gain at DC.
pub fn butter_lowpass(order: usize, cutoff_hz: f64, sampling_rate: f64) -> Result<Sos> {
    check_order(order)?;
    if !(cutoff_hz > 0.0 && cutoff_hz < sampling_rate / 2.0) {
        return Err(Error::InvalidBand {
            low_hz: 0.0,
            high_hz: cutoff_hz,
            sampling_rate,
            reason: "cutoff must lie strictly between 0 and Nyquist",
        });
    }
    let k = 2.0 * sampling_rate;
    let wc = k * (PI * cutoff_hz / sampling_rate).tan();
    let poles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * wc, k))
        .collect();
    let (quadratics, reals) = pole_sections(&poles);
    let mut sections: Vec<Biquad> = quadratics
        .into_iter()
        .map(|a| Biquad { b: [1.0, 2.0, 1.0], a })
        .collect();
    for r in reals {
        sections.push(Biquad {
            b: [1.0, 1.0, 0.0],
            a: [1.0, -r, 0.0],
        });
    }
    let mut sos = Sos { sections, order };
    let gain = sos.magnitude(0.0, sampling_rate);
    normalize_gain(&mut sos, gain);
    Ok(sos)
}

fn normalize_gain(sos: &mut Sos, current: f64) {
    let per_section = (1.0 / current).powf(1.0 / sos.sections.len() as f64);
    for s in &mut sos.sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
}
