//! Torso scatterer layout and per-channel coupling.
//!
//! Scatterers sit on a lateral axis across the torso (metres, positive
//! toward the subject's left). Each virtual channel looks at one lateral
//! position with a Gaussian beam footprint; the coverage setting moves the
//! channel fan over the right half, the whole torso or the left half and
//! blanks the scatterers outside the illuminated half.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyRegion {
    Apical,
    SternumXiphoidBand,
    Abdomen,
    Arm,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    LeftHalf,
    RightHalf,
    All,
}

impl std::str::FromStr for Coverage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left_half" | "left" => Ok(Coverage::LeftHalf),
            "right_half" | "right" => Ok(Coverage::RightHalf),
            "all" => Ok(Coverage::All),
            other => Err(Error::InvalidInput(format!("unknown coverage '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub rest_range_m: f64,
    /// Respiration modulation coefficient.
    pub alpha: f64,
    /// Heartbeat modulation coefficient.
    pub beta: f64,
    pub rcs_gain: f64,
    pub body_region: BodyRegion,
    /// Lateral position on the torso, positive toward the subject's left.
    #[serde(default)]
    pub lateral_m: f64,
}

impl Scatterer {
    pub fn validate(&self) -> Result<()> {
        if !(self.rest_range_m.is_finite() && self.rest_range_m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scatterer rest_range_m must be positive, got {}",
                self.rest_range_m
            )));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(
                "scatterer alpha/beta must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Complex gain and fixed phase for every (channel, scatterer) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCoupling {
    pub num_channels: usize,
    pub num_scatterers: usize,
    /// Row-major [channel][scatterer].
    pub gain: Vec<Complex64>,
    /// Row-major [channel][scatterer], radians.
    pub fixed_phase: Vec<f64>,
}

impl ChannelCoupling {
    pub fn gain(&self, ch: usize, k: usize) -> Complex64 {
        self.gain[ch * self.num_scatterers + k]
    }

    pub fn fixed_phase(&self, ch: usize, k: usize) -> f64 {
        self.fixed_phase[ch * self.num_scatterers + k]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_channels * self.num_scatterers;
        if self.gain.len() != n || self.fixed_phase.len() != n {
            return Err(Error::InvalidConfig(format!(
                "coupling expects {n} entries for {}x{}",
                self.num_channels, self.num_scatterers
            )));
        }
        if self
            .gain
            .iter()
            .any(|g| !(g.re.is_finite() && g.im.is_finite()))
            || self.fixed_phase.iter().any(|p| !p.is_finite())
        {
            return Err(Error::InvalidConfig(
                "coupling contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Sum of |C| over all channels for scatterers matching `pred`.
    pub fn total_gain_where(
        &self,
        scatterers: &[Scatterer],
        pred: impl Fn(&Scatterer) -> bool,
    ) -> f64 {
        (0..self.num_channels)
            .flat_map(|ch| (0..self.num_scatterers).map(move |k| (ch, k)))
            .filter(|&(_, k)| pred(&scatterers[k]))
            .map(|(ch, k)| self.gain(ch, k).norm())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub coverage: Coverage,
    pub scatterers: Vec<Scatterer>,
    pub coupling: ChannelCoupling,
    /// Body region of the strongest-coupled scatterer, per channel.
    pub channel_regions: Vec<BodyRegion>,
    /// Lateral look position of each channel.
    pub channel_lateral_m: Vec<f64>,
}

impl Layout {
    pub fn channels_in(&self, region: BodyRegion) -> Vec<usize> {
        (0..self.channel_regions.len())
            .filter(|&c| self.channel_regions[c] == region)
            .collect()
    }
}

/// Lateral beam footprint (1σ) on the torso.
const BEAM_SIGMA_M: f64 = 0.035;
/// Scatterers farther than this beyond the midline are blanked by half coverage.
const HALF_MASK_M: f64 = 0.03;

// (region, lateral, depth offset, alpha, beta, rcs)
#[rustfmt::skip]
const TORSO: [(BodyRegion, f64, f64, f64, f64, f64); 11] = [
    (BodyRegion::Arm,                -0.22, 0.130, 0.02, 0.00, 0.9),
    (BodyRegion::Other,              -0.13, 0.035, 0.80, 0.08, 1.0),
    (BodyRegion::Other,              -0.07, 0.015, 0.90, 0.10, 1.0),
    (BodyRegion::SternumXiphoidBand, -0.02, 0.000, 1.00, 0.06, 1.0),
    (BodyRegion::SternumXiphoidBand,  0.02, 0.010, 1.00, 0.05, 1.0),
    (BodyRegion::Abdomen,             0.00, 0.050, 0.90, 0.02, 0.8),
    (BodyRegion::Other,               0.06, 0.015, 0.90, 0.25, 1.0),
    (BodyRegion::Apical,              0.09, 0.160, 0.15, 1.00, 1.0),
    (BodyRegion::Apical,              0.11, 0.170, 0.12, 0.90, 0.9),
    (BodyRegion::Other,               0.14, 0.040, 0.80, 0.15, 1.0),
    (BodyRegion::Arm,                 0.22, 0.130, 0.02, 0.00, 0.9),
];

fn channel_fan(coverage: Coverage, num_channels: usize) -> Vec<f64> {
    let (lo, hi) = match coverage {
        Coverage::RightHalf => (-0.24, 0.0),
        Coverage::All => (-0.14, 0.10),
        Coverage::LeftHalf => (0.0, 0.24),
    };
    if num_channels == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..num_channels)
        .map(|c| lo + (hi - lo) * c as f64 / (num_channels - 1) as f64)
        .collect()
}

/// Eleven-scatterer torso: two arms, chest wall, a sternum–xiphoid band,
/// abdomen, and a two-point apical cluster on the left chest. Arms and the
/// apical cluster sit several range bins behind the chest wall.
pub fn default_layout(coverage: Coverage, base_range_m: f64, num_channels: usize) -> Layout {
    let scatterers: Vec<Scatterer> = TORSO
        .iter()
        .map(
            |&(body_region, lateral_m, dz, alpha, beta, rcs_gain)| Scatterer {
                rest_range_m: base_range_m + dz,
                alpha,
                beta,
                rcs_gain,
                body_region,
                lateral_m,
            },
        )
        .collect();
    let fan = channel_fan(coverage, num_channels);
    let visible = |s: &Scatterer| match coverage {
        Coverage::All => true,
        Coverage::RightHalf => s.lateral_m <= HALF_MASK_M,
        Coverage::LeftHalf => s.lateral_m >= -HALF_MASK_M,
    };
    // Fixed phases depend on geometry only, never on the scenario seed.
    let mut rng = ChaCha8Rng::seed_from_u64(0x7069_6e67);
    let k = scatterers.len();
    let mut gain = Vec::with_capacity(num_channels * k);
    let mut fixed_phase = Vec::with_capacity(num_channels * k);
    for &x in &fan {
        for s in &scatterers {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let d = s.lateral_m - x;
            let mag = if visible(s) {
                s.rcs_gain * (-(d * d) / (2.0 * BEAM_SIGMA_M * BEAM_SIGMA_M)).exp()
            } else {
                0.0
            };
            gain.push(Complex64::new(mag, 0.0));
            fixed_phase.push(phase);
        }
    }
    let coupling = ChannelCoupling {
        num_channels,
        num_scatterers: k,
        gain,
        fixed_phase,
    };
    let channel_regions = (0..num_channels)
        .map(|ch| {
            let best = (0..k)
                .max_by(|&a, &b| {
                    coupling
                        .gain(ch, a)
                        .norm()
                        .total_cmp(&coupling.gain(ch, b).norm())
                })
                .expect("layout has scatterers");
            scatterers[best].body_region
        })
        .collect();
    Layout {
        coverage,
        scatterers,
        coupling,
        channel_regions,
        channel_lateral_m: fan,
    }
}
