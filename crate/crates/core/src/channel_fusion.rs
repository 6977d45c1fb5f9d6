//! Multi-channel fusion: per-channel band SNR, screening, dominance
//! classification and SNR-weighted class-wise fusion.

use serde::{Deserialize, Serialize};

use crate::dsp::{bandpass_zero_phase, best_lag, db, from_db, median, periodogram, shift};
use crate::error::{Error, Result};
use crate::model::{PhysioSignal, Unit};
use crate::range_fusion::MAX_DELAY_S;
use crate::range_select::{BandSpec, MIN_FREQ_HZ, SPECTRUM_NFFT};

/// Half-width of the window around a band peak that counts as signal.
pub const PEAK_HALF_WIDTH_HZ: f64 = 0.06;
pub const RESP_DOMINANT_RATIO: f64 = 3.0;
pub const HEART_DOMINANT_RATIO: f64 = 0.35;
/// Fraction of the leading-group mean below which a channel counts as weak.
pub const SCREEN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrPair {
    pub snr_b_db: f64,
    pub snr_h_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelClass {
    RespirationDominant,
    HeartbeatDominant,
    Mixed,
}

impl ChannelClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelClass::RespirationDominant => "respiration_dominant",
            ChannelClass::HeartbeatDominant => "heartbeat_dominant",
            ChannelClass::Mixed => "mixed",
        }
    }
}

/// How the heartbeat-dominant test reads its ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassRule {
    /// linB/linH > 3 respiration, linB/linH < 0.35 heartbeat, else mixed.
    #[default]
    Partition,
    /// linB/linH > 3 respiration, linH/linB < 0.35 heartbeat, else mixed.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub channel_id: usize,
    pub snr: SnrPair,
    pub retained: bool,
    pub class: ChannelClass,
    pub weight_resp: f64,
    pub weight_heart: f64,
}

/// Peak-window power over the median out-of-band floor, per band.
pub fn band_snr(sig: &PhysioSignal, bands: &BandSpec) -> Result<SnrPair> {
    if sig.rate_hz < 20.0 - 1e-9 || sig.duration_s() < 10.0 - 1e-9 {
        return Err(Error::InsufficientData(format!(
            "band SNR needs >= 10 s at >= 20 Hz, got {:.2} s at {} Hz",
            sig.duration_s(),
            sig.rate_hz
        )));
    }
    let psd = periodogram(&sig.samples, sig.rate_hz, SPECTRUM_NFFT);
    let nyq = sig.rate_hz / 2.0;
    let noise_bins: Vec<f64> = psd
        .range(MIN_FREQ_HZ, nyq)
        .filter(|&k| {
            let f = psd.freq(k);
            !(f >= bands.resp_band.0 && f <= bands.heart_band.1)
        })
        .map(|k| psd.power[k])
        .collect();
    if noise_bins.is_empty() {
        return Err(Error::InsufficientData(
            "no out-of-band spectrum for the noise floor".into(),
        ));
    }
    // Median of exponential periodogram cells is ln 2 times their mean.
    let floor = median(&noise_bins) / std::f64::consts::LN_2;
    let one = |(lo, hi): (f64, f64)| -> f64 {
        let Some(peak) = psd.argmax_in(lo, hi) else {
            return f64::NAN;
        };
        let f0 = psd.freq(peak);
        let window = psd.range(f0 - PEAK_HALF_WIDTH_HZ, f0 + PEAK_HALF_WIDTH_HZ);
        let width = window.clone().count() as f64;
        let signal: f64 = window.map(|k| psd.power[k]).sum();
        let noise = floor * width;
        if noise > 0.0 {
            db(signal / noise)
        } else if signal > 0.0 {
            db(f64::MAX)
        } else {
            0.0
        }
    };
    let pair = SnrPair {
        snr_b_db: one(bands.resp_band),
        snr_h_db: one(bands.heart_band),
    };
    if !(pair.snr_b_db.is_finite() && pair.snr_h_db.is_finite()) {
        return Err(Error::DegenerateSignal { stage: "band_snr" });
    }
    Ok(pair)
}

/// Mean of the leading group of `values` sorted descending, the group
/// ending just before the most negative first difference.
fn leading_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let mut brk = 1;
    let mut worst = f64::INFINITY;
    for k in 0..v.len() - 1 {
        let d = v[k + 1] - v[k];
        if d < worst {
            worst = d;
            brk = k + 1;
        }
    }
    v[..brk].iter().sum::<f64>() / brk as f64
}

/// 0.8μ for positive μ; for μ ≤ 0 the same 20% margin below μ.
fn weak_threshold(mu: f64) -> f64 {
    mu - (1.0 - SCREEN_FRACTION) * mu.abs()
}

/// Retained flags: a channel is dropped only when both SNRs fall below
/// their thresholds. At least one channel always survives.
pub fn screen_channels(snrs: &[SnrPair]) -> Vec<bool> {
    let n = snrs.len();
    if n < 2 {
        return vec![true; n];
    }
    let b: Vec<f64> = snrs.iter().map(|s| s.snr_b_db).collect();
    let h: Vec<f64> = snrs.iter().map(|s| s.snr_h_db).collect();
    let (tb, th) = (
        weak_threshold(leading_mean(&b)),
        weak_threshold(leading_mean(&h)),
    );
    let mut keep: Vec<bool> = snrs
        .iter()
        .map(|s| !(s.snr_b_db < tb && s.snr_h_db < th))
        .collect();
    if !keep.iter().any(|&k| k) {
        let best = (0..n)
            .max_by(|&i, &j| b[i].total_cmp(&b[j]).then(j.cmp(&i)))
            .expect("n >= 2");
        keep[best] = true;
    }
    keep
}

pub fn classify_channel(snr: SnrPair, rule: ClassRule) -> ChannelClass {
    let ratio = from_db(snr.snr_b_db - snr.snr_h_db);
    if ratio > RESP_DOMINANT_RATIO {
        return ChannelClass::RespirationDominant;
    }
    let heart = match rule {
        ClassRule::Partition => ratio < HEART_DOMINANT_RATIO,
        ClassRule::Literal => 1.0 / ratio < HEART_DOMINANT_RATIO,
    };
    if heart {
        ChannelClass::HeartbeatDominant
    } else {
        ChannelClass::Mixed
    }
}

/// SNRs, screening, classes and normalized linear-SNR weights.
pub fn build_reports(
    channel_ids: &[usize],
    snrs: &[SnrPair],
    rule: ClassRule,
) -> Vec<ChannelReport> {
    let keep = screen_channels(snrs);
    let mut reports: Vec<ChannelReport> = channel_ids
        .iter()
        .zip(snrs)
        .zip(&keep)
        .map(|((&channel_id, &snr), &retained)| ChannelReport {
            channel_id,
            snr,
            retained,
            class: classify_channel(snr, rule),
            weight_resp: 0.0,
            weight_heart: 0.0,
        })
        .collect();
    let resp: Vec<usize> = (0..reports.len())
        .filter(|&i| contributes(&reports[i], true))
        .collect();
    let heart: Vec<usize> = (0..reports.len())
        .filter(|&i| contributes(&reports[i], false))
        .collect();
    let total_b: f64 = resp.iter().map(|&i| from_db(reports[i].snr.snr_b_db)).sum();
    let total_h: f64 = heart
        .iter()
        .map(|&i| from_db(reports[i].snr.snr_h_db))
        .sum();
    for &i in &resp {
        reports[i].weight_resp = from_db(reports[i].snr.snr_b_db) / total_b;
    }
    for &i in &heart {
        reports[i].weight_heart = from_db(reports[i].snr.snr_h_db) / total_h;
    }
    reports
}

fn contributes(r: &ChannelReport, resp: bool) -> bool {
    r.retained
        && match r.class {
            ChannelClass::Mixed => true,
            ChannelClass::RespirationDominant => resp,
            ChannelClass::HeartbeatDominant => !resp,
        }
}

fn fuse_stream(
    signals: &[PhysioSignal],
    reports: &[ChannelReport],
    band: (f64, f64),
    resp: bool,
) -> Result<PhysioSignal> {
    let name = if resp { "respiration" } else { "heart" };
    let weight = |r: &ChannelReport| if resp { r.weight_resp } else { r.weight_heart };
    let mut members: Vec<usize> = (0..reports.len())
        .filter(|&i| weight(&reports[i]) > 0.0)
        .collect();
    if members.is_empty() {
        return Err(Error::StreamEmpty(name));
    }
    members.sort_by_key(|&i| reports[i].channel_id);
    let rate = signals[members[0]].rate_hz;
    let filtered: Vec<Vec<f64>> = members
        .iter()
        .map(|&i| bandpass_zero_phase(&signals[i].samples, rate, band.0, band.1))
        .collect();
    let anchor = (0..members.len())
        .max_by(|&a, &b| {
            weight(&reports[members[a]])
                .total_cmp(&weight(&reports[members[b]]))
                .then(b.cmp(&a))
        })
        .expect("non-empty");
    let max_lag = (MAX_DELAY_S * rate).round() as usize;
    let mut out = vec![0.0; filtered[anchor].len()];
    for (k, x) in filtered.iter().enumerate() {
        let (lag, c) = if k == anchor {
            (0, 1.0)
        } else {
            best_lag(x, &filtered[anchor], max_lag, true)
        };
        let g = weight(&reports[members[k]]) * if c < 0.0 { -1.0 } else { 1.0 };
        for (o, v) in out.iter_mut().zip(shift(x, lag)) {
            *o += g * v;
        }
    }
    PhysioSignal::new(out, rate, Unit::Radians)
}

/// Respiration and heart streams from the retained channels of each class.
/// Signals are band-passed, aligned to the highest-weight member and
/// summed with their report weights.
pub fn fuse_by_class(
    signals: &[PhysioSignal],
    reports: &[ChannelReport],
    bands: &BandSpec,
) -> (Result<PhysioSignal>, Result<PhysioSignal>) {
    if signals.len() != reports.len() || signals.is_empty() {
        let e = || {
            Err(Error::InvalidInput(
                "one signal per channel report required".into(),
            ))
        };
        return (e(), e());
    }
    (
        fuse_stream(signals, reports, bands.resp_band, true),
        fuse_stream(signals, reports, bands.heart_band, false),
    )
}

pub fn reports_to_json(reports: &[ChannelReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

pub fn reports_to_csv(reports: &[ChannelReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "channel_id",
        "snr_b_db",
        "snr_h_db",
        "retained",
        "class",
        "weight_resp",
        "weight_heart",
    ])?;
    for r in reports {
        w.write_record([
            r.channel_id.to_string(),
            format!("{:.4}", r.snr.snr_b_db),
            format!("{:.4}", r.snr.snr_h_db),
            r.retained.to_string(),
            r.class.as_str().to_string(),
            format!("{:.6}", r.weight_resp),
            format!("{:.6}", r.weight_heart),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
