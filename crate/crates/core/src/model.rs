//! Radar configuration and the shared data types passed between stages.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::template::{HeartTemplateParams, RespTemplateParams};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Respiration band in Hz.
pub const RESP_BAND: (f64, f64) = (0.1, 0.8);
/// Heartbeat band in Hz.
pub const HEART_BAND: (f64, f64) = (0.8, 2.0);

pub const RR_RANGE_BPM: (f64, f64) = (6.0, 48.0);
pub const HR_RANGE_BPM: (f64, f64) = (48.0, 120.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_slope_hz_per_s: f64,
    pub chirp_duration_s: f64,
    pub num_tx: usize,
    pub num_rx: usize,
    pub num_range_bins: usize,
    pub slow_time_rate_hz: f64,
    pub fast_time_rate_hz: f64,
}

impl Default for RadarConfig {
    /// 77–81 GHz, 2 TX × 4 RX, 256 range bins, 20 Hz slow time. The slope is
    /// derived from bandwidth and chirp duration (66 MHz/µs nominal).
    fn default() -> Self {
        let bandwidth_hz = 4.0e9;
        let chirp_duration_s = bandwidth_hz / 66.0e12;
        let num_range_bins = 256;
        Self {
            carrier_freq_hz: 77.0e9,
            bandwidth_hz,
            chirp_slope_hz_per_s: bandwidth_hz / chirp_duration_s,
            chirp_duration_s,
            num_tx: 2,
            num_rx: 4,
            num_range_bins,
            slow_time_rate_hz: 20.0,
            fast_time_rate_hz: num_range_bins as f64 / chirp_duration_s,
        }
    }
}

impl RadarConfig {
    pub fn num_channels(&self) -> usize {
        self.num_tx * self.num_rx
    }

    /// Virtual channel id for a TX/RX pair.
    pub fn channel_id(&self, tx: usize, rx: usize) -> usize {
        tx * self.num_rx + rx
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("chirp_slope_hz_per_s", self.chirp_slope_hz_per_s),
            ("chirp_duration_s", self.chirp_duration_s),
            ("fast_time_rate_hz", self.fast_time_rate_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.num_channels() == 0 {
            return Err(Error::InvalidConfig("num_tx * num_rx must be >= 1".into()));
        }
        if !(self.slow_time_rate_hz.is_finite() && self.slow_time_rate_hz > 4.0) {
            return Err(Error::InvalidConfig(format!(
                "slow_time_rate_hz must exceed 4 Hz, got {}",
                self.slow_time_rate_hz
            )));
        }
        if !self.num_range_bins.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "num_range_bins must be a power of two, got {}",
                self.num_range_bins
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub wavelength_m: f64,
    pub range_resolution_m: f64,
    pub max_unambiguous_range_m: f64,
    /// False when slope·duration differs from bandwidth by more than 10%.
    pub slope_consistent: bool,
}

pub fn derive_constants(config: &RadarConfig) -> Result<DerivedConstants> {
    config.validate()?;
    let wavelength_m = SPEED_OF_LIGHT / config.carrier_freq_hz;
    let range_resolution_m = SPEED_OF_LIGHT / (2.0 * config.bandwidth_hz);
    let swept = config.chirp_slope_hz_per_s * config.chirp_duration_s;
    let slope_consistent = ((swept - config.bandwidth_hz) / config.bandwidth_hz).abs() <= 0.1;
    if !slope_consistent {
        log::warn!(
            "chirp slope × duration = {swept:.4e} Hz disagrees with bandwidth {:.4e} Hz",
            config.bandwidth_hz
        );
    }
    Ok(DerivedConstants {
        wavelength_m,
        range_resolution_m,
        max_unambiguous_range_m: config.num_range_bins as f64 * range_resolution_m,
        slope_consistent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Radians,
    Meters,
    Normalized,
}

/// Real-valued slow-time waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysioSignal {
    pub samples: Vec<f64>,
    pub rate_hz: f64,
    pub unit: Unit,
}

impl PhysioSignal {
    pub fn new(samples: Vec<f64>, rate_hz: f64, unit: Unit) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "signal needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "signal rate must be positive, got {rate_hz}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "signal contains non-finite samples".into(),
            ));
        }
        Ok(Self {
            samples,
            rate_hz,
            unit,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }
}

/// d = λ·φ / (4π)
pub fn phase_to_displacement(sig: &PhysioSignal, wavelength_m: f64) -> Result<PhysioSignal> {
    if sig.unit != Unit::Radians {
        return Err(Error::UnitMismatch {
            expected: Unit::Radians,
            actual: sig.unit,
        });
    }
    let k = wavelength_m / (4.0 * PI);
    Ok(PhysioSignal {
        samples: sig.samples.iter().map(|p| p * k).collect(),
        rate_hz: sig.rate_hz,
        unit: Unit::Meters,
    })
}

/// φ = 4π·d / λ
pub fn displacement_to_phase(sig: &PhysioSignal, wavelength_m: f64) -> Result<PhysioSignal> {
    if sig.unit != Unit::Meters {
        return Err(Error::UnitMismatch {
            expected: Unit::Meters,
            actual: sig.unit,
        });
    }
    let k = 4.0 * PI / wavelength_m;
    Ok(PhysioSignal {
        samples: sig.samples.iter().map(|d| d * k).collect(),
        rate_hz: sig.rate_hz,
        unit: Unit::Radians,
    })
}

/// Complex IF samples laid out channel-major, chirp-major, sample-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    pub config: RadarConfig,
    pub num_chirps: usize,
    pub samples_per_chirp: usize,
    data: Vec<Complex64>,
}

impl RadarCube {
    pub fn new(
        config: RadarConfig,
        num_chirps: usize,
        samples_per_chirp: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        let channels = config.num_channels();
        if channels == 0 || num_chirps == 0 || samples_per_chirp == 0 {
            return Err(Error::Length("cube dimensions must be >= 1".into()));
        }
        let expected = channels * num_chirps * samples_per_chirp;
        if data.len() != expected {
            return Err(Error::Length(format!(
                "expected {expected} samples for {channels}x{num_chirps}x{samples_per_chirp}, got {}",
                data.len()
            )));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Data("cube contains non-finite samples".into()));
        }
        Ok(Self {
            config,
            num_chirps,
            samples_per_chirp,
            data,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.config.num_channels()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// All chirps of one channel, `num_chirps * samples_per_chirp` long.
    pub fn channel(&self, ch: usize) -> &[Complex64] {
        let n = self.num_chirps * self.samples_per_chirp;
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn chirp(&self, ch: usize, chirp: usize) -> &[Complex64] {
        let base = (ch * self.num_chirps + chirp) * self.samples_per_chirp;
        &self.data[base..base + self.samples_per_chirp]
    }

    pub fn duration_s(&self) -> f64 {
        self.num_chirps as f64 / self.config.slow_time_rate_hz
    }

    /// Keep only the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<RadarCube> {
        let mut data =
            Vec::with_capacity(channels.len() * self.num_chirps * self.samples_per_chirp);
        for &ch in channels {
            if ch >= self.num_channels() {
                return Err(Error::InvalidInput(format!("channel {ch} out of range")));
            }
            data.extend_from_slice(self.channel(ch));
        }
        let config = RadarConfig {
            num_tx: 1,
            num_rx: channels.len(),
            ..self.config
        };
        RadarCube::new(config, self.num_chirps, self.samples_per_chirp, data)
    }
}

/// Range-FFT output for one channel, rows = range bins, columns = slow time.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeTimeMatrix {
    pub channel_id: usize,
    pub num_bins: usize,
    pub num_slow: usize,
    pub slow_time_rate_hz: f64,
    data: Vec<Complex64>,
}

impl RangeTimeMatrix {
    pub fn new(
        channel_id: usize,
        num_bins: usize,
        num_slow: usize,
        slow_time_rate_hz: f64,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != num_bins * num_slow {
            return Err(Error::Length(format!(
                "range-time matrix expects {} cells, got {}",
                num_bins * num_slow,
                data.len()
            )));
        }
        Ok(Self {
            channel_id,
            num_bins,
            num_slow,
            slow_time_rate_hz,
            data,
        })
    }

    pub fn row(&self, bin: usize) -> &[Complex64] {
        &self.data[bin * self.num_slow..(bin + 1) * self.num_slow]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Mean power over slow time for every range bin.
    pub fn power_profile(&self) -> Vec<f64> {
        (0..self.num_bins)
            .map(|b| self.row(b).iter().map(|z| z.norm_sqr()).sum::<f64>() / self.num_slow as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalEstimate {
    pub rr_bpm: f64,
    pub hr_bpm: f64,
    pub resp_template_params: RespTemplateParams,
    pub heart_template_params: HeartTemplateParams,
    pub resp_match_score: f64,
    pub heart_match_score: f64,
}
