#![allow(dead_code)]

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use vitalwave_core::sim::{BodyRegion, ChannelCoupling, Coverage, Scatterer, Scenario};
use vitalwave_core::{PhysioSignal, Unit};

pub const RATE: f64 = 20.0;
pub const N: usize = 300;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect()
}

pub fn tone(f: f64, amp: f64, phase: f64) -> Vec<f64> {
    (0..N)
        .map(|i| amp * (std::f64::consts::TAU * f * i as f64 / RATE + phase).sin())
        .collect()
}

pub fn signal(samples: Vec<f64>) -> PhysioSignal {
    PhysioSignal::new(samples, RATE, Unit::Radians).unwrap()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Noise-free scenario with the given scatterers, each coupled with unit
/// gain into all eight channels.
pub fn bare_scenario(scatterers: Vec<Scatterer>, seed: u64) -> Scenario {
    let mut sc = Scenario::default_with(Coverage::All, seed);
    let k = scatterers.len();
    sc.coupling = ChannelCoupling {
        num_channels: 8,
        num_scatterers: k,
        gain: vec![Complex64::new(1.0, 0.0); 8 * k],
        fixed_phase: vec![0.0; 8 * k],
    };
    sc.scatterers = scatterers;
    sc.noise_snr_db = None;
    sc
}

pub fn scatterer(range_m: f64, alpha: f64, beta: f64, region: BodyRegion) -> Scatterer {
    Scatterer {
        rest_range_m: range_m,
        alpha,
        beta,
        rcs_gain: 1.0,
        body_region: region,
        lateral_m: 0.0,
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pct_err(est: f64, truth: f64) -> f64 {
    (est - truth).abs() / truth * 100.0
}

/// Amplitude of a tone whose power sits `db` above unit-variance white
/// noise integrated over the ±0.06 Hz peak window.
pub fn tone_amplitude(db: f64) -> f64 {
    (2.0 * 10f64.powf(db / 10.0) * (2.0 * 0.06 * 2.0 / RATE)).sqrt()
}

/// SNR of `x` against the known waveform `s`: projection power over
/// residual power, in dB.
pub fn projection_snr(x: &[f64], s: &[f64]) -> f64 {
    let ss: f64 = s.iter().map(|v| v * v).sum();
    let c = x.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let e: f64 = x.iter().zip(s).map(|(a, b)| (a - c * b).powi(2)).sum();
    10.0 * (c * c * ss / e).log10()
}
