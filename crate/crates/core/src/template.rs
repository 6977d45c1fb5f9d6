//! Respiration and heartbeat template banks and rate extraction by
//! exhaustive normalized cross-correlation.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{bandpass_zero_phase_padded, dot};
use crate::error::{Error, Result};
use crate::model::{
    PhysioSignal, Unit, VitalEstimate, HEART_BAND, HR_RANGE_BPM, RESP_BAND, RR_RANGE_BPM,
};
use crate::sim::motion::{cached_vdp_cycle, RespCycle, RespShape, VdpCycle};

/// Minimum number of template phase offsets tried per period.
pub const MIN_PHASE_STEPS: usize = 64;
pub const RATE_STEP_BPM: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RespTemplateParams {
    pub rr_bpm: f64,
    pub t1_fraction: f64,
    pub tau_rs_s: f64,
}

impl RespTemplateParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rr_bpm >= RR_RANGE_BPM.0
            && self.rr_bpm <= RR_RANGE_BPM.1
            && (0.25..=0.6).contains(&self.t1_fraction)
            && (0.2..=1.5).contains(&self.tau_rs_s);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "respiration template parameters out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartTemplateParams {
    pub hr_bpm: f64,
    pub vdp_alpha: f64,
}

impl HeartTemplateParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.hr_bpm >= HR_RANGE_BPM.0
            && self.hr_bpm <= HR_RANGE_BPM.1
            && (0.0..=5.0).contains(&self.vdp_alpha);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "heart template parameters out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateParams {
    Resp(RespTemplateParams),
    Heart(HeartTemplateParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub best_params: TemplateParams,
    pub rate_bpm: f64,
    pub score: f64,
}

/// A periodic unit waveform, evaluated at cycle phase.
#[derive(Debug, Clone)]
enum Shape {
    Resp(RespCycle),
    Heart(Arc<VdpCycle>),
}

impl Shape {
    fn at_phase(&self, p: f64) -> f64 {
        match self {
            Shape::Resp(c) => c.normalized(p.rem_euclid(1.0) * c.period_s),
            Shape::Heart(c) => c.normalized_at_phase(p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Template {
    pub params: TemplateParams,
    pub rate_bpm: f64,
    shape: Shape,
}

impl Template {
    pub fn resp(params: RespTemplateParams) -> Result<Self> {
        params.validate()?;
        let cycle = RespCycle::new(
            60.0 / params.rr_bpm,
            RespShape::new(params.t1_fraction, params.tau_rs_s)?,
        );
        Ok(Self {
            params: TemplateParams::Resp(params),
            rate_bpm: params.rr_bpm,
            shape: Shape::Resp(cycle),
        })
    }

    pub fn heart(params: HeartTemplateParams) -> Result<Self> {
        params.validate()?;
        let cycle = cached_vdp_cycle(params.vdp_alpha)?;
        Ok(Self {
            params: TemplateParams::Heart(params),
            rate_bpm: params.hr_bpm,
            shape: Shape::Heart(cycle),
        })
    }

    /// Raw samples starting at cycle phase `phase0`.
    fn raw(&self, n: usize, rate_hz: f64, phase0: f64, out: &mut Vec<f64>) {
        let f = self.rate_bpm / 60.0;
        out.clear();
        out.extend((0..n).map(|i| self.shape.at_phase(phase0 + f * i as f64 / rate_hz)));
    }

    /// Zero-mean, unit peak-to-peak samples over `duration_s`.
    pub fn render(&self, duration_s: f64, rate_hz: f64) -> Result<PhysioSignal> {
        let n = (duration_s * rate_hz).round() as usize;
        let mut x = Vec::new();
        self.raw(n, rate_hz, 0.0, &mut x);
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let mean = x.iter().sum::<f64>() / n.max(1) as f64;
        let p2p = hi - lo;
        if !(p2p > 0.0) {
            return Err(Error::DegenerateSignal { stage: "template" });
        }
        PhysioSignal::new(
            x.iter().map(|v| (v - mean) / p2p).collect(),
            rate_hz,
            Unit::Normalized,
        )
    }

    /// Whole-sample shifts per sequence and sub-sample sequences per shift,
    /// giving at least `MIN_PHASE_STEPS` offsets over one cycle.
    fn phase_grid(&self, rate_hz: f64) -> (usize, usize) {
        let shifts = ((60.0 / self.rate_bpm * rate_hz).ceil() as usize).max(1);
        (shifts, MIN_PHASE_STEPS.div_ceil(shifts).max(1))
    }

    /// Max normalized correlation of a unit-norm, zero-mean signal against
    /// every phase offset of this template, optionally band-passed like the
    /// signal. Offsets are whole-sample shifts of a few sub-sample
    /// renderings, so each costs one dot product.
    fn score(
        &self,
        sig_unit: &[f64],
        rate_hz: f64,
        band: Option<(f64, f64)>,
        buf: &mut Vec<f64>,
    ) -> f64 {
        let n = sig_unit.len();
        let (shifts, sub) = self.phase_grid(rate_hz);
        let f = self.rate_bpm / 60.0;
        // Periodic margin that absorbs the filter transients.
        let margin = band.map_or(0, |(lo, _)| (rate_hz / lo).ceil() as usize);
        let len = n + shifts;
        let mut best = f64::NEG_INFINITY;
        let mut sum = vec![0.0; len + 1];
        let mut sq = vec![0.0; len + 1];
        for u in 0..sub {
            let start = u as f64 / sub as f64 - margin as f64;
            self.raw(len + 2 * margin, rate_hz, f * start / rate_hz, buf);
            if let Some((lo, hi)) = band {
                let filtered = bandpass_zero_phase_padded(buf, rate_hz, lo, hi, 0);
                buf.clear();
                buf.extend_from_slice(&filtered[margin..margin + len]);
            }
            for (j, v) in buf.iter().enumerate() {
                sum[j + 1] = sum[j] + v;
                sq[j + 1] = sq[j] + v * v;
            }
            for k in 0..shifts {
                let s = sum[k + n] - sum[k];
                let e = sq[k + n] - sq[k] - s * s / n as f64;
                if e > 1e-12 * n as f64 {
                    best = best.max(dot(sig_unit, &buf[k..k + n]) / e.sqrt());
                }
            }
        }
        best.clamp(-1.0, 1.0)
    }
}

pub fn resp_template(
    params: RespTemplateParams,
    duration_s: f64,
    rate_hz: f64,
) -> Result<PhysioSignal> {
    Template::resp(params)?.render(duration_s, rate_hz)
}

pub fn heart_template(
    params: HeartTemplateParams,
    duration_s: f64,
    rate_hz: f64,
) -> Result<PhysioSignal> {
    Template::heart(params)?.render(duration_s, rate_hz)
}

/// Templates ordered by ascending rate. With `band` set, every rendering
/// is band-passed before scoring, matching the filtered input streams.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    pub templates: Vec<Template>,
    pub band: Option<(f64, f64)>,
}

/// Bank grid: rate range, shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub rr_range_bpm: (f64, f64),
    pub hr_range_bpm: (f64, f64),
    pub rate_step_bpm: f64,
    pub t1_fractions: Vec<f64>,
    pub tau_rs_values_s: Vec<f64>,
    pub vdp_alphas: Vec<f64>,
    pub resp_band: Option<(f64, f64)>,
    pub heart_band: Option<(f64, f64)>,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            rr_range_bpm: RR_RANGE_BPM,
            hr_range_bpm: HR_RANGE_BPM,
            rate_step_bpm: RATE_STEP_BPM,
            t1_fractions: vec![0.3, 0.4, 0.5],
            tau_rs_values_s: vec![0.3, 0.6, 1.0],
            vdp_alphas: vec![0.5, 1.5, 3.0],
            resp_band: Some(RESP_BAND),
            heart_band: Some(HEART_BAND),
        }
    }
}

/// lo, lo+step, ... up to hi, computed without accumulated rounding.
pub fn rate_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e6).round() / 1e6)
        .collect()
}

impl TemplateBank {
    pub fn respiration(cfg: &BankConfig) -> Result<Self> {
        let mut templates = Vec::new();
        for rr in rate_grid(cfg.rr_range_bpm.0, cfg.rr_range_bpm.1, cfg.rate_step_bpm) {
            for &t1_fraction in &cfg.t1_fractions {
                for &tau_rs_s in &cfg.tau_rs_values_s {
                    templates.push(Template::resp(RespTemplateParams {
                        rr_bpm: rr,
                        t1_fraction,
                        tau_rs_s,
                    })?);
                }
            }
        }
        Ok(Self {
            templates,
            band: cfg.resp_band,
        })
    }

    pub fn heart(cfg: &BankConfig) -> Result<Self> {
        let mut templates = Vec::new();
        for hr in rate_grid(cfg.hr_range_bpm.0, cfg.hr_range_bpm.1, cfg.rate_step_bpm) {
            for &vdp_alpha in &cfg.vdp_alphas {
                templates.push(Template::heart(HeartTemplateParams {
                    hr_bpm: hr,
                    vdp_alpha,
                })?);
            }
        }
        Ok(Self {
            templates,
            band: cfg.heart_band,
        })
    }

    /// Unfiltered bank.
    pub fn from_templates(templates: Vec<Template>) -> Self {
        Self {
            templates,
            band: None,
        }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Banks {
    pub resp: TemplateBank,
    pub heart: TemplateBank,
}

impl Banks {
    pub fn new(cfg: &BankConfig) -> Result<Self> {
        Ok(Self {
            resp: TemplateBank::respiration(cfg)?,
            heart: TemplateBank::heart(cfg)?,
        })
    }
}

/// Shared default banks, built once.
pub fn default_banks() -> &'static Banks {
    static BANKS: OnceLock<Banks> = OnceLock::new();
    BANKS.get_or_init(|| {
        Banks::new(&BankConfig::default()).expect("default bank parameters are valid")
    })
}

/// Exhaustive search; ties resolve to the earlier (lower-rate) template.
pub fn match_bank(sig: &PhysioSignal, bank: &TemplateBank) -> Result<MatchResult> {
    if bank.is_empty() {
        return Err(Error::InvalidInput("empty template bank".into()));
    }
    let n = sig.samples.len();
    let mean = sig.samples.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = sig.samples.iter().map(|v| v - mean).collect();
    let norm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = sig.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(norm > 1e-12 * scale * (n as f64).sqrt()) || norm == 0.0 {
        return Err(Error::DegenerateSignal {
            stage: "template_match",
        });
    }
    let unit: Vec<f64> = centred.iter().map(|v| v / norm).collect();
    let scores: Vec<f64> = bank
        .templates
        .par_iter()
        .map_init(Vec::new, |buf, t| {
            t.score(&unit, sig.rate_hz, bank.band, buf)
        })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let t = &bank.templates[best];
    Ok(MatchResult {
        best_params: t.params,
        rate_bpm: t.rate_bpm,
        score: scores[best],
    })
}

pub fn extract_vitals(
    resp: &PhysioSignal,
    heart: &PhysioSignal,
    banks: &Banks,
) -> Result<VitalEstimate> {
    let (r, h) = rayon::join(
        || match_bank(resp, &banks.resp),
        || match_bank(heart, &banks.heart),
    );
    let (r, h) = (r?, h?);
    let (TemplateParams::Resp(rp), TemplateParams::Heart(hp)) = (r.best_params, h.best_params)
    else {
        return Err(Error::InvalidInput(
            "banks passed in the wrong order".into(),
        ));
    };
    Ok(VitalEstimate {
        rr_bpm: r.rate_bpm,
        hr_bpm: h.rate_bpm,
        resp_template_params: rp,
        heart_template_params: hp,
        resp_match_score: r.score,
        heart_match_score: h.score,
    })
}
