//! Small numeric kernels shared by the processing stages: windows, FFT
//! plumbing, periodograms, zero-phase band-pass filtering and lagged
//! correlation.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub fn fft_in_place(buf: &mut [Complex64]) {
    fft_plan(buf.len()).process(buf);
}

/// Symmetric Blackman window (a0 = 0.42, a1 = 0.5, a2 = 0.08).
pub fn blackman(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / m;
            0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
        })
        .collect()
}

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / m).cos())
        .collect()
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn demean(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolated quantile, `q` in [0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let a = demean(a);
    let b = demean(b);
    let den = (energy(&a) * energy(&b)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        dot(&a, &b) / den
    }
}

/// One-sided power spectrum on a uniform frequency grid.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub df: f64,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    /// Indices whose frequency lies in the closed interval [lo, hi].
    pub fn range(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        let last = self.power.len().saturating_sub(1);
        let a = ((lo / self.df).ceil().max(0.0) as usize).min(last + 1);
        let b = ((hi / self.df).floor().max(0.0) as usize).min(last);
        a..=b
    }

    pub fn band_energy(&self, lo: f64, hi: f64) -> f64 {
        self.range(lo, hi).filter_map(|k| self.power.get(k)).sum()
    }

    /// Bin index of the maximum inside [lo, hi]; lowest index on ties.
    pub fn argmax_in(&self, lo: f64, hi: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for k in self.range(lo, hi) {
            let p = self.power[k];
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((k, p));
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Hann-windowed periodogram of the mean-removed signal, zero-padded to at
/// least `min_nfft` points (rounded up to a power of two).
pub fn periodogram(x: &[f64], rate_hz: f64, min_nfft: usize) -> Spectrum {
    let n = x.len();
    let nfft = min_nfft.max(n).next_power_of_two();
    let w = hann(n);
    let m = mean(x);
    let wsum: f64 = w.iter().map(|v| v * v).sum();
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for i in 0..n {
        buf[i] = Complex64::new((x[i] - m) * w[i], 0.0);
    }
    fft_in_place(&mut buf);
    let scale = 1.0 / (wsum * rate_hz);
    let power = buf[..=nfft / 2]
        .iter()
        .map(|z| z.norm_sqr() * scale)
        .collect();
    Spectrum {
        df: rate_hz / nfft as f64,
        power,
    }
}

/// Direct-form II transposed biquad.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn butter_lowpass(fc: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let c = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn butter_highpass(fc: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let c = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    /// Filter state that makes a constant input `x0` pass without transient.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let y = gain * x0;
        let z2 = self.b[2] * x0 - self.a[1] * y;
        let z1 = y - self.b[0] * x0;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64]) {
        if x.is_empty() {
            return;
        }
        let [mut z1, mut z2] = self.steady_state(x[0]);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// Zero-phase Butterworth band-pass: a second-order high-pass at `lo` and a
/// second-order low-pass at `hi` (fourth order overall), run forward and
/// backward over a mirror-reflected extension of the record.
pub fn bandpass_zero_phase(x: &[f64], rate_hz: f64, lo: f64, hi: f64) -> Vec<f64> {
    bandpass_zero_phase_padded(x, rate_hz, lo, hi, (3.0 * rate_hz / lo).ceil() as usize)
}

/// As [`bandpass_zero_phase`] with an explicit reflection length; `pad = 0`
/// filters the record as is.
pub fn bandpass_zero_phase_padded(
    x: &[f64],
    rate_hz: f64,
    lo: f64,
    hi: f64,
    pad: usize,
) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return x.to_vec();
    }
    let sections = [
        Biquad::butter_highpass(lo, rate_hz),
        Biquad::butter_lowpass(hi, rate_hz),
    ];
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(x[n - 1 - i]);
    }
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Σ a[n + lag]·b[n] over the overlapping samples.
pub fn xcorr_at(a: &[f64], b: &[f64], lag: isize) -> f64 {
    let n = a.len().min(b.len()) as isize;
    let (start, end) = if lag >= 0 { (0, n - lag) } else { (-lag, n) };
    let mut acc = 0.0;
    for i in start.max(0)..end.max(0) {
        acc += a[(i + lag) as usize] * b[i as usize];
    }
    acc
}

/// Lag in [-max_lag, max_lag] maximizing the normalized cross-correlation
/// of `a` against `b` (or its magnitude when `use_abs`). Each lag is
/// normalized by the energies of the overlapping segments. Returns the lag
/// and the signed normalized value there. Ties resolve to the smallest |lag|.
pub fn best_lag(a: &[f64], b: &[f64], max_lag: usize, use_abs: bool) -> (isize, f64) {
    let n = a.len().min(b.len());
    if n == 0 {
        return (0, 0.0);
    }
    let prefix = |x: &[f64]| {
        let mut p = Vec::with_capacity(n + 1);
        p.push(0.0);
        let mut acc = 0.0;
        for v in &x[..n] {
            acc += v * v;
            p.push(acc);
        }
        p
    };
    let (pa, pb) = (prefix(a), prefix(b));
    let ncc = |lag: isize| {
        // a[i + lag]·b[i] for i in [start, end)
        let (start, end) = if lag >= 0 {
            (0, n - lag as usize)
        } else {
            ((-lag) as usize, n)
        };
        let ea = pa[(end as isize + lag) as usize] - pa[(start as isize + lag) as usize];
        let eb = pb[end] - pb[start];
        let den = (ea * eb).sqrt();
        if den > 0.0 {
            xcorr_at(a, b, lag) / den
        } else {
            0.0
        }
    };
    let max_lag = max_lag.min(n.saturating_sub(1)) as isize;
    let mut best = (0isize, ncc(0));
    let key = |v: f64| if use_abs { v.abs() } else { v };
    for k in 1..=max_lag {
        for lag in [-k, k] {
            let v = ncc(lag);
            if key(v) > key(best.1) + 1e-12 {
                best = (lag, v);
            }
        }
    }
    best
}

/// `out[n] = x[n + delay]`, holding the edge value where the shift runs off
/// the record.
pub fn shift(x: &[f64], delay: isize) -> Vec<f64> {
    let n = x.len() as isize;
    (0..n)
        .map(|i| x[(i + delay).clamp(0, n - 1) as usize])
        .collect()
}

/// Successive-difference phase unwrapping.
pub fn unwrap(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in phase {
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(p + offset);
        prev = Some(p);
    }
    out
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}
