//! Physiological motion generators.
//!
//! Respiration follows a two-branch RC charge/discharge cycle: lung volume
//! rises toward its inspiratory target with time constant τ for the first
//! `t1_fraction` of the period, then decays exponentially. The cycle is
//! solved for periodicity, so both branch joins are continuous.
//!
//! Heartbeat is the steady-state limit cycle of the Van der Pol relaxation
//! oscillator `V'' − α(1 − V²)V' + V = 0`, integrated with fixed-step RK4
//! and rescaled in time to the requested beat rate.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PhysioSignal, Unit, HR_RANGE_BPM, RR_RANGE_BPM};

/// Default respiratory time constant τ_RS in seconds.
pub const DEFAULT_TAU_RS_S: f64 = 0.6;

/// Oscillator-time integration step.
pub const VDP_STEP: f64 = 1e-3;
const VDP_TRANSIENT_PERIODS: usize = 20;
const VDP_CHECK_PERIODS: usize = 5;
const VDP_TABLE_LEN: usize = 4096;

/// Uniformly sampled time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start_s: f64,
    pub rate_hz: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(rate_hz: f64, len: usize) -> Self {
        Self {
            start_s: 0.0,
            rate_hz,
            len,
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_s + i as f64 / self.rate_hz
    }
}

fn check_band(what: &'static str, value: f64, band: (f64, f64)) -> Result<()> {
    if !(value >= band.0 && value <= band.1) {
        return Err(Error::OutOfBand {
            what,
            value,
            lo: band.0,
            hi: band.1,
        });
    }
    Ok(())
}

/// Shape of the periodic RC respiration cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RespShape {
    /// Inspiration share of the period, t1 / (t1 + t2).
    pub t1_fraction: f64,
    pub tau_s: f64,
}

impl RespShape {
    pub fn new(t1_fraction: f64, tau_s: f64) -> Result<Self> {
        if !(t1_fraction > 0.0 && t1_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "t1_fraction must lie in (0, 1), got {t1_fraction}"
            )));
        }
        if !(tau_s.is_finite() && tau_s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tau must be positive, got {tau_s}"
            )));
        }
        Ok(Self { t1_fraction, tau_s })
    }
}

/// Closed-form periodic RC cycle for one breathing period.
#[derive(Debug, Clone, Copy)]
pub struct RespCycle {
    pub period_s: f64,
    pub t1_s: f64,
    pub tau_s: f64,
    /// Volume at the start of inspiration (cycle minimum).
    pub v0: f64,
    /// Volume at the end of inspiration (cycle maximum).
    pub v1: f64,
}

impl RespCycle {
    pub fn new(period_s: f64, shape: RespShape) -> Self {
        let t1_s = shape.t1_fraction * period_s;
        let a = (-t1_s / shape.tau_s).exp();
        let b = (-(period_s - t1_s) / shape.tau_s).exp();
        let v1 = (1.0 - a) / (1.0 - a * b);
        Self {
            period_s,
            t1_s,
            tau_s: shape.tau_s,
            v0: b * v1,
            v1,
        }
    }

    /// Charging branch, valid on [0, t1].
    pub fn inspiration(&self, t: f64) -> f64 {
        1.0 - (1.0 - self.v0) * (-t / self.tau_s).exp()
    }

    /// Discharge branch, valid on [t1, period].
    pub fn expiration(&self, t: f64) -> f64 {
        self.v1 * (-(t - self.t1_s) / self.tau_s).exp()
    }

    /// Unit peak-to-peak value in [0, 1] at any time (periodic).
    pub fn normalized(&self, t: f64) -> f64 {
        let tm = t.rem_euclid(self.period_s);
        let v = if tm <= self.t1_s {
            self.inspiration(tm)
        } else {
            self.expiration(tm)
        };
        (v - self.v0) / (self.v1 - self.v0)
    }
}

/// Chest displacement from breathing, peak-to-peak `amplitude_m`.
pub fn respiration_motion(
    rr_bpm: f64,
    amplitude_m: f64,
    t1_fraction: f64,
    grid: &TimeGrid,
) -> Result<PhysioSignal> {
    respiration_motion_with_tau(rr_bpm, amplitude_m, t1_fraction, DEFAULT_TAU_RS_S, grid)
}

pub fn respiration_motion_with_tau(
    rr_bpm: f64,
    amplitude_m: f64,
    t1_fraction: f64,
    tau_s: f64,
    grid: &TimeGrid,
) -> Result<PhysioSignal> {
    check_band("respiration rate", rr_bpm, RR_RANGE_BPM)?;
    let cycle = RespCycle::new(60.0 / rr_bpm, RespShape::new(t1_fraction, tau_s)?);
    let samples = (0..grid.len)
        .map(|i| amplitude_m * cycle.normalized(grid.time(i)))
        .collect();
    PhysioSignal::new(samples, grid.rate_hz, Unit::Meters)
}

/// One steady-state period of the Van der Pol limit cycle, starting at an
/// upward zero crossing, tabulated on a uniform phase grid.
#[derive(Debug, Clone)]
pub struct VdpCycle {
    pub alpha: f64,
    /// Period in oscillator time units.
    pub period: f64,
    /// max |V| over the cycle.
    pub amplitude: f64,
    table: Vec<f64>,
    min: f64,
    max: f64,
}

impl VdpCycle {
    /// V at cycle phase `p` (any real; wraps into [0, 1)).
    pub fn at_phase(&self, p: f64) -> f64 {
        let n = self.table.len();
        let x = p.rem_euclid(1.0) * n as f64;
        let i = (x.floor() as usize) % n;
        let frac = x - x.floor();
        let a = self.table[i];
        let b = self.table[(i + 1) % n];
        a + (b - a) * frac
    }

    /// Cycle value rescaled to unit peak-to-peak and centred on zero.
    pub fn normalized_at_phase(&self, p: f64) -> f64 {
        (self.at_phase(p) - 0.5 * (self.max + self.min)) / (self.max - self.min)
    }

    pub fn peak_to_peak(&self) -> f64 {
        self.max - self.min
    }
}

fn vdp_deriv(alpha: f64, v: f64, w: f64) -> (f64, f64) {
    (w, alpha * (1.0 - v * v) * w - v)
}

fn rk4_step(alpha: f64, v: f64, w: f64, h: f64) -> (f64, f64) {
    let (k1v, k1w) = vdp_deriv(alpha, v, w);
    let (k2v, k2w) = vdp_deriv(alpha, v + 0.5 * h * k1v, w + 0.5 * h * k1w);
    let (k3v, k3w) = vdp_deriv(alpha, v + 0.5 * h * k2v, w + 0.5 * h * k2w);
    let (k4v, k4w) = vdp_deriv(alpha, v + h * k3v, w + h * k3w);
    (
        v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
    )
}

/// Integrate from (V, V') = (2, 0), discard 20 periods of transient, and
/// tabulate the final period. Fails when the peak-to-peak amplitude still
/// drifts by more than 1% across the last five periods.
pub fn vdp_limit_cycle(alpha: f64) -> Result<VdpCycle> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "vdp alpha must be >= 0, got {alpha}"
        )));
    }
    let h = VDP_STEP;
    let total_periods = VDP_TRANSIENT_PERIODS + VDP_CHECK_PERIODS;
    let (mut v, mut w) = (2.0, 0.0);
    let mut t = 0.0;
    let mut crossings: Vec<f64> = Vec::new();
    // (time, V) of the running period plus per-period extrema.
    let mut current: Vec<(f64, f64)> = Vec::new();
    let mut last_period: Vec<(f64, f64)> = Vec::new();
    let mut p2p: Vec<f64> = Vec::new();
    let max_steps = 50_000_000usize;
    let mut steps = 0usize;
    while crossings.len() <= total_periods {
        let (nv, nw) = rk4_step(alpha, v, w, h);
        let nt = t + h;
        if v < 0.0 && nv >= 0.0 {
            let tc = t + h * (-v) / (nv - v);
            if !crossings.is_empty() {
                let (lo, hi) = current
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, x)| {
                        (lo.min(x), hi.max(x))
                    });
                p2p.push(hi - lo);
                last_period = std::mem::take(&mut current);
            }
            current.clear();
            crossings.push(tc);
        }
        if !crossings.is_empty() {
            current.push((nt, nv));
        }
        v = nv;
        w = nw;
        t = nt;
        steps += 1;
        if steps > max_steps {
            return Err(Error::TransientNotSettled { drift: f64::NAN });
        }
    }
    let recent = &p2p[p2p.len() - VDP_CHECK_PERIODS..];
    let (lo, hi) = recent
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let drift = (hi - lo) / (0.5 * (hi + lo));
    if drift > 0.01 {
        return Err(Error::TransientNotSettled { drift });
    }
    let n = crossings.len();
    let period =
        (crossings[n - 1] - crossings[n - 1 - VDP_CHECK_PERIODS]) / VDP_CHECK_PERIODS as f64;
    let start = crossings[n - 2];
    let end = crossings[n - 1];
    // last_period holds samples strictly after the start crossing; prepend it.
    let mut pts = Vec::with_capacity(last_period.len() + 2);
    pts.push((start, 0.0));
    pts.extend(last_period.iter().copied().filter(|&(ti, _)| ti < end));
    pts.push((end, 0.0));
    let span = end - start;
    let mut table = Vec::with_capacity(VDP_TABLE_LEN);
    let mut j = 0usize;
    for i in 0..VDP_TABLE_LEN {
        let ti = start + span * i as f64 / VDP_TABLE_LEN as f64;
        while j + 2 < pts.len() && pts[j + 1].0 < ti {
            j += 1;
        }
        let (t0, v0) = pts[j];
        let (t1, v1) = pts[j + 1];
        let f = if t1 > t0 { (ti - t0) / (t1 - t0) } else { 0.0 };
        table.push(v0 + (v1 - v0) * f);
    }
    let (min, max) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, x)| {
            (lo.min(x), hi.max(x))
        });
    Ok(VdpCycle {
        alpha,
        period,
        amplitude: max.max(-min),
        table,
        min,
        max,
    })
}

/// Memoized limit cycle; identical α values share one integration.
pub fn cached_vdp_cycle(alpha: f64) -> Result<Arc<VdpCycle>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<VdpCycle>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache
        .lock()
        .expect("vdp cache poisoned")
        .get(&alpha.to_bits())
    {
        return Ok(Arc::clone(c));
    }
    let cycle = Arc::new(vdp_limit_cycle(alpha)?);
    cache
        .lock()
        .expect("vdp cache poisoned")
        .insert(alpha.to_bits(), Arc::clone(&cycle));
    Ok(cycle)
}

/// Chest displacement from the heartbeat, peak-to-peak `amplitude_m`.
pub fn heartbeat_motion(
    hr_bpm: f64,
    amplitude_m: f64,
    vdp_alpha: f64,
    grid: &TimeGrid,
) -> Result<PhysioSignal> {
    check_band("heart rate", hr_bpm, HR_RANGE_BPM)?;
    let cycle = cached_vdp_cycle(vdp_alpha)?;
    let f = hr_bpm / 60.0;
    let samples = (0..grid.len)
        .map(|i| amplitude_m * cycle.normalized_at_phase(f * grid.time(i)))
        .collect();
    PhysioSignal::new(samples, grid.rate_hz, Unit::Meters)
}
