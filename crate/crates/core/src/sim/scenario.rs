//! Scenario description and IF cube synthesis.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layout::{default_layout, BodyRegion, ChannelCoupling, Coverage, Scatterer};
use super::motion::{heartbeat_motion, respiration_motion_with_tau, TimeGrid, DEFAULT_TAU_RS_S};
use crate::error::{Error, Result};
use crate::model::{derive_constants, RadarConfig, RadarCube, SPEED_OF_LIGHT};

/// Random body motion superimposed on the chest scatterers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RbmModel {
    #[default]
    None,
    /// Narrowband shaking of the abdomen scatterers.
    LegShake {
        amplitude_m: f64,
        band_lo_hz: f64,
        band_hi_hz: f64,
    },
    /// Transient sway of every scatterer above the abdomen.
    HeadTurn {
        amplitude_m: f64,
        band_lo_hz: f64,
        band_hi_hz: f64,
    },
    /// Slow whole-body sway.
    StandSway {
        amplitude_m: f64,
        band_lo_hz: f64,
        band_hi_hz: f64,
    },
}

impl RbmModel {
    pub fn leg_shake() -> Self {
        RbmModel::LegShake {
            amplitude_m: 0.5e-3,
            band_lo_hz: 4.0,
            band_hi_hz: 6.0,
        }
    }

    pub fn head_turn() -> Self {
        RbmModel::HeadTurn {
            amplitude_m: 2.0e-3,
            band_lo_hz: 0.2,
            band_hi_hz: 0.5,
        }
    }

    pub fn stand_sway() -> Self {
        RbmModel::StandSway {
            amplitude_m: 1.0e-3,
            band_lo_hz: 0.1,
            band_hi_hz: 0.3,
        }
    }

    fn params(&self) -> Option<(f64, f64, f64)> {
        match *self {
            RbmModel::None => None,
            RbmModel::LegShake {
                amplitude_m,
                band_lo_hz,
                band_hi_hz,
            }
            | RbmModel::HeadTurn {
                amplitude_m,
                band_lo_hz,
                band_hi_hz,
            }
            | RbmModel::StandSway {
                amplitude_m,
                band_lo_hz,
                band_hi_hz,
            } => Some((amplitude_m, band_lo_hz, band_hi_hz)),
        }
    }

    fn affects(&self, region: BodyRegion) -> bool {
        match self {
            RbmModel::None => false,
            RbmModel::LegShake { .. } => region == BodyRegion::Abdomen,
            RbmModel::HeadTurn { .. } => region != BodyRegion::Abdomen,
            RbmModel::StandSway { .. } => true,
        }
    }

    /// Displacement trace over the chirp times.
    fn trace(&self, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let Some((amp, lo, hi)) = self.params() else {
            return vec![0.0; times.len()];
        };
        const TONES: usize = 6;
        let tones: Vec<(f64, f64, f64)> = (0..TONES)
            .map(|_| {
                (
                    rng.random_range(lo..=hi),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.5..1.0),
                )
            })
            .collect();
        let duration = times.last().copied().unwrap_or(0.0) - times.first().copied().unwrap_or(0.0);
        // Head turns are a single Hann-windowed burst of ~4 s.
        let burst = matches!(self, RbmModel::HeadTurn { .. }).then(|| {
            let width = 4.0f64.min(duration.max(1e-9));
            let start = rng.random_range(0.0..=(duration - width).max(0.0));
            (start, width)
        });
        let mut out: Vec<f64> = times
            .iter()
            .map(|&t| {
                let mut v: f64 = tones
                    .iter()
                    .map(|&(f, ph, a)| a * (TAU * f * t + ph).sin())
                    .sum();
                if let Some((start, width)) = burst {
                    let u = (t - times[0] - start) / width;
                    v *= if (0.0..=1.0).contains(&u) {
                        0.5 - 0.5 * (TAU * u).cos()
                    } else {
                        0.0
                    };
                }
                v
            })
            .collect();
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            for v in &mut out {
                *v *= amp / peak;
            }
        }
        out
    }
}

fn default_resp_amplitude() -> f64 {
    2.5e-3
}
fn default_heart_amplitude() -> f64 {
    0.6e-3
}
fn default_phase_noise() -> f64 {
    0.01
}
fn default_duration() -> f64 {
    15.0
}
fn default_t1_fraction() -> f64 {
    0.4
}
fn default_tau() -> f64 {
    DEFAULT_TAU_RS_S
}
fn default_vdp_alpha() -> f64 {
    1.0
}
fn default_base_range() -> f64 {
    0.5
}
fn default_coverage() -> Coverage {
    Coverage::All
}
fn default_displacement_scale() -> f64 {
    1.0
}

/// Everything needed to synthesize one cube, including ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub radar: RadarConfig,
    pub scatterers: Vec<Scatterer>,
    pub coupling: ChannelCoupling,
    pub rr_bpm_truth: f64,
    pub hr_bpm_truth: f64,
    #[serde(default = "default_resp_amplitude")]
    pub resp_amplitude_m: f64,
    #[serde(default = "default_heart_amplitude")]
    pub heart_amplitude_m: f64,
    /// Receiver SNR per IF sample relative to the mean signal power; `None`
    /// disables receiver noise.
    pub noise_snr_db: Option<f64>,
    #[serde(default = "default_phase_noise")]
    pub phase_noise_std_rad: f64,
    #[serde(default)]
    pub rbm_model: RbmModel,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    pub rng_seed: u64,
    #[serde(default = "default_t1_fraction")]
    pub resp_t1_fraction: f64,
    #[serde(default = "default_tau")]
    pub resp_tau_s: f64,
    #[serde(default = "default_vdp_alpha")]
    pub heart_vdp_alpha: f64,
    /// Chest displacement per unit lung-volume excursion.
    #[serde(default = "default_displacement_scale")]
    pub displacement_scale: f64,
}

/// On-disk scenario: layout fields may be omitted and are then generated
/// from `coverage` and `base_range_m`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    radar: Option<RadarConfig>,
    #[serde(default)]
    scatterers: Option<Vec<Scatterer>>,
    #[serde(default)]
    coupling: Option<ChannelCoupling>,
    #[serde(default = "default_coverage")]
    coverage: Coverage,
    #[serde(default = "default_base_range")]
    base_range_m: f64,
    rr_bpm_truth: f64,
    hr_bpm_truth: f64,
    #[serde(default = "default_resp_amplitude")]
    resp_amplitude_m: f64,
    #[serde(default = "default_heart_amplitude")]
    heart_amplitude_m: f64,
    #[serde(default)]
    noise_snr_db: Option<f64>,
    #[serde(default = "default_phase_noise")]
    phase_noise_std_rad: f64,
    #[serde(default)]
    rbm_model: RbmModel,
    #[serde(default = "default_duration")]
    duration_s: f64,
    #[serde(default)]
    rng_seed: u64,
    #[serde(default = "default_t1_fraction")]
    resp_t1_fraction: f64,
    #[serde(default = "default_tau")]
    resp_tau_s: f64,
    #[serde(default = "default_vdp_alpha")]
    heart_vdp_alpha: f64,
    #[serde(default = "default_displacement_scale")]
    displacement_scale: f64,
}

impl Scenario {
    /// Default torso layout at 0.5 m, RR 15 / HR 75, 20 dB receiver SNR.
    pub fn default_with(coverage: Coverage, seed: u64) -> Self {
        let radar = RadarConfig::default();
        let layout = default_layout(coverage, default_base_range(), radar.num_channels());
        Self {
            radar,
            scatterers: layout.scatterers,
            coupling: layout.coupling,
            rr_bpm_truth: 15.0,
            hr_bpm_truth: 75.0,
            resp_amplitude_m: default_resp_amplitude(),
            heart_amplitude_m: default_heart_amplitude(),
            noise_snr_db: Some(20.0),
            phase_noise_std_rad: default_phase_noise(),
            rbm_model: RbmModel::None,
            duration_s: default_duration(),
            rng_seed: seed,
            resp_t1_fraction: default_t1_fraction(),
            resp_tau_s: default_tau(),
            heart_vdp_alpha: default_vdp_alpha(),
            displacement_scale: default_displacement_scale(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: ScenarioFile = serde_json::from_str(s)?;
        let radar = f.radar.unwrap_or_default();
        let (scatterers, coupling) = match (f.scatterers, f.coupling) {
            (Some(s), Some(c)) => (s, c),
            (None, None) => {
                let l = default_layout(f.coverage, f.base_range_m, radar.num_channels());
                (l.scatterers, l.coupling)
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "scatterers and coupling must be given together".into(),
                ))
            }
        };
        let sc = Scenario {
            radar,
            scatterers,
            coupling,
            rr_bpm_truth: f.rr_bpm_truth,
            hr_bpm_truth: f.hr_bpm_truth,
            resp_amplitude_m: f.resp_amplitude_m,
            heart_amplitude_m: f.heart_amplitude_m,
            noise_snr_db: f.noise_snr_db,
            phase_noise_std_rad: f.phase_noise_std_rad,
            rbm_model: f.rbm_model,
            duration_s: f.duration_s,
            rng_seed: f.rng_seed,
            resp_t1_fraction: f.resp_t1_fraction,
            resp_tau_s: f.resp_tau_s,
            heart_vdp_alpha: f.heart_vdp_alpha,
            displacement_scale: f.displacement_scale,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.resp_amplitude_m >= 0.0 && self.heart_amplitude_m >= 0.0) {
            return Err(Error::InvalidConfig("amplitudes must be >= 0".into()));
        }
        if !(self.phase_noise_std_rad >= 0.0) {
            return Err(Error::InvalidConfig(
                "phase_noise_std_rad must be >= 0".into(),
            ));
        }
        let rr = crate::model::RR_RANGE_BPM;
        let hr = crate::model::HR_RANGE_BPM;
        if !(self.rr_bpm_truth >= rr.0 && self.rr_bpm_truth <= rr.1) {
            return Err(Error::InvalidConfig(format!(
                "rr_bpm_truth {} outside [6, 48]",
                self.rr_bpm_truth
            )));
        }
        if !(self.hr_bpm_truth >= hr.0 && self.hr_bpm_truth <= hr.1) {
            return Err(Error::InvalidConfig(format!(
                "hr_bpm_truth {} outside [48, 120]",
                self.hr_bpm_truth
            )));
        }
        for s in &self.scatterers {
            s.validate()?;
        }
        self.coupling.validate()?;
        if self.coupling.num_channels != self.radar.num_channels()
            || self.coupling.num_scatterers != self.scatterers.len()
        {
            return Err(Error::InvalidConfig(format!(
                "coupling is {}x{} but scenario has {} channels and {} scatterers",
                self.coupling.num_channels,
                self.coupling.num_scatterers,
                self.radar.num_channels(),
                self.scatterers.len()
            )));
        }
        Ok(())
    }

    pub fn num_chirps(&self) -> usize {
        (self.duration_s * self.radar.slow_time_rate_hz)
            .round()
            .max(1.0) as usize
    }
}

/// Noise-free motion traces shared by every channel.
struct MotionTraces {
    resp: Vec<f64>,
    heart: Vec<f64>,
    rbm: Vec<f64>,
    phase_noise: Vec<f64>,
}

fn motion_traces(sc: &Scenario, num_chirps: usize) -> Result<MotionTraces> {
    let rate = sc.radar.slow_time_rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.rng_seed);
    rng.set_stream(0);
    let resp_grid = TimeGrid {
        start_s: rng.random_range(0.0..60.0 / sc.rr_bpm_truth),
        rate_hz: rate,
        len: num_chirps,
    };
    let heart_grid = TimeGrid {
        start_s: rng.random_range(0.0..60.0 / sc.hr_bpm_truth),
        rate_hz: rate,
        len: num_chirps,
    };
    let resp = respiration_motion_with_tau(
        sc.rr_bpm_truth,
        sc.resp_amplitude_m * sc.displacement_scale,
        sc.resp_t1_fraction,
        sc.resp_tau_s,
        &resp_grid,
    )?;
    let heart = heartbeat_motion(
        sc.hr_bpm_truth,
        sc.heart_amplitude_m,
        sc.heart_vdp_alpha,
        &heart_grid,
    )?;
    let times: Vec<f64> = (0..num_chirps).map(|i| i as f64 / rate).collect();
    let rbm = sc.rbm_model.trace(&times, &mut rng);
    let mut phase_noise = Vec::with_capacity(num_chirps);
    let mut acc = 0.0;
    if sc.phase_noise_std_rad > 0.0 {
        let normal = Normal::new(0.0, sc.phase_noise_std_rad).expect("valid std");
        for _ in 0..num_chirps {
            acc += normal.sample(&mut rng);
            phase_noise.push(acc);
        }
    } else {
        phase_noise.resize(num_chirps, 0.0);
    }
    // Center the resp trace so scatterers oscillate around their rest range.
    let resp_mean = crate::dsp::mean(&resp.samples);
    Ok(MotionTraces {
        resp: resp.samples.iter().map(|v| v - resp_mean).collect(),
        heart: heart.samples,
        rbm,
        phase_noise,
    })
}

/// Coherent sum over scatterers of the dechirped IF return, plus receiver
/// noise. Fast time is referenced to mid-chirp, so the carrier is the
/// chirp-centre frequency. Channels are generated in parallel from
/// per-channel RNG streams.
pub fn synthesize_cube(sc: &Scenario) -> Result<RadarCube> {
    sc.validate()?;
    let consts = derive_constants(&sc.radar)?;
    let num_chirps = sc.num_chirps();
    let samples = sc.radar.num_range_bins;
    let traces = motion_traces(sc, num_chirps)?;
    let rbm_peak = traces.rbm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for s in &sc.scatterers {
        let worst = s.rest_range_m
            + s.alpha * sc.resp_amplitude_m * sc.displacement_scale
            + s.beta * sc.heart_amplitude_m
            + rbm_peak;
        if worst >= consts.max_unambiguous_range_m {
            return Err(Error::RangeOverflow {
                range_m: worst,
                max_m: consts.max_unambiguous_range_m,
            });
        }
    }
    let k_phase = 4.0 * PI / consts.wavelength_m;
    let beat_step =
        TAU * 2.0 * sc.radar.chirp_slope_hz_per_s / (SPEED_OF_LIGHT * sc.radar.fast_time_rate_hz);
    let num_channels = sc.radar.num_channels();
    let centre = 0.5 * (samples as f64 - 1.0);

    let mut channels: Vec<Vec<Complex64>> = (0..num_channels)
        .into_par_iter()
        .map(|ch| {
            let mut out = vec![Complex64::new(0.0, 0.0); num_chirps * samples];
            for p in 0..num_chirps {
                let row = &mut out[p * samples..(p + 1) * samples];
                for (k, s) in sc.scatterers.iter().enumerate() {
                    let c = sc.coupling.gain(ch, k);
                    if c.norm_sqr() == 0.0 {
                        continue;
                    }
                    let rbm = if sc.rbm_model.affects(s.body_region) {
                        traces.rbm[p]
                    } else {
                        0.0
                    };
                    let r =
                        s.rest_range_m + s.alpha * traces.resp[p] + s.beta * traces.heart[p] + rbm;
                    let phase =
                        k_phase * r + sc.coupling.fixed_phase(ch, k) + traces.phase_noise[p];
                    let rot = Complex64::from_polar(1.0, beat_step * r);
                    let mut z = c * Complex64::from_polar(1.0, phase - beat_step * r * centre);
                    for v in row.iter_mut() {
                        *v += z;
                        z *= rot;
                    }
                }
            }
            out
        })
        .collect();

    if let Some(snr_db) = sc.noise_snr_db {
        let total: f64 = channels.iter().flatten().map(|z| z.norm_sqr()).sum();
        let count = (num_channels * num_chirps * samples) as f64;
        let signal_power = total / count;
        let noise_power = if signal_power > 0.0 {
            signal_power / 10f64.powf(snr_db / 10.0)
        } else {
            0.0
        };
        let sigma = (noise_power / 2.0).sqrt();
        if sigma > 0.0 {
            channels.par_iter_mut().enumerate().for_each(|(ch, data)| {
                let mut rng = ChaCha8Rng::seed_from_u64(sc.rng_seed);
                rng.set_stream(1 + ch as u64);
                let normal = Normal::new(0.0, sigma).expect("valid sigma");
                for v in data.iter_mut() {
                    *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                }
            });
        }
    }

    let data: Vec<Complex64> = channels.into_iter().flatten().collect();
    RadarCube::new(sc.radar, num_chirps, samples, data)
}

/// Injected per-scatterer displacement trace (metres) over the chirp times,
/// excluding phase noise. Used for closed-loop checks.
pub fn scatterer_displacement(sc: &Scenario, k: usize) -> Result<Vec<f64>> {
    let n = sc.num_chirps();
    let tr = motion_traces(sc, n)?;
    let s = &sc.scatterers[k];
    Ok((0..n)
        .map(|p| {
            let rbm = if sc.rbm_model.affects(s.body_region) {
                tr.rbm[p]
            } else {
                0.0
            };
            s.alpha * tr.resp[p] + s.beta * tr.heart[p] + rbm
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(range: f64, alpha: f64, beta: f64) -> Scenario {
        let mut sc = Scenario::default_with(Coverage::All, 3);
        sc.radar.num_tx = 1;
        sc.radar.num_rx = 1;
        sc.scatterers = vec![Scatterer {
            rest_range_m: range,
            alpha,
            beta,
            rcs_gain: 1.0,
            body_region: BodyRegion::SternumXiphoidBand,
            lateral_m: 0.0,
        }];
        sc.coupling = ChannelCoupling {
            num_channels: 1,
            num_scatterers: 1,
            gain: vec![Complex64::new(1.0, 0.0)],
            fixed_phase: vec![0.3],
        };
        sc
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let sc = Scenario::default_with(Coverage::All, 11);
        let a = synthesize_cube(&sc).unwrap();
        let b = synthesize_cube(&sc).unwrap();
        assert_eq!(a.data(), b.data());
        let mut other = sc.clone();
        other.rng_seed = 12;
        assert_ne!(a.data(), synthesize_cube(&other).unwrap().data());
    }

    #[test]
    fn overflow_is_rejected() {
        let sc = single(9.7, 1.0, 0.0);
        assert!(matches!(
            synthesize_cube(&sc),
            Err(Error::RangeOverflow { .. })
        ));
    }

    #[test]
    fn linear_in_scatterers_without_noise() {
        let mut a = single(0.5, 1.0, 0.1);
        a.noise_snr_db = None;
        let mut b = single(0.8, 0.2, 1.0);
        b.noise_snr_db = None;
        let mut both = a.clone();
        both.scatterers.push(b.scatterers[0]);
        both.coupling = ChannelCoupling {
            num_channels: 1,
            num_scatterers: 2,
            gain: vec![Complex64::new(1.0, 0.0); 2],
            fixed_phase: vec![0.3, 0.3],
        };
        let ca = synthesize_cube(&a).unwrap();
        let cb = synthesize_cube(&b).unwrap();
        let cab = synthesize_cube(&both).unwrap();
        for ((x, y), z) in ca.data().iter().zip(cb.data()).zip(cab.data()) {
            assert!((x + y - z).norm() < 1e-9);
        }
    }

    #[test]
    fn scenario_json_fills_layout() {
        let sc =
            Scenario::from_json_str(r#"{"rr_bpm_truth": 15, "hr_bpm_truth": 75, "rng_seed": 4}"#)
                .unwrap();
        assert_eq!(sc.scatterers.len(), 11);
        assert_eq!(sc.coupling.num_channels, 8);
        let back = Scenario::from_json_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
        let err =
            Scenario::from_json_str(r#"{"rr_bpm_truth": "x", "hr_bpm_truth": 75}"#).unwrap_err();
        assert!(
            err.to_string().contains("rr_bpm_truth") || err.to_string().contains("invalid type")
        );
    }
}
