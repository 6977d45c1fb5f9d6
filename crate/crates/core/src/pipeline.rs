//! End-to-end processing: the proposed two-stage fusion and the two
//! single-stream reference pipelines. All three share preprocessing,
//! bin selection and template matching; only the fusion stages differ.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_fusion::{band_snr, build_reports, fuse_by_class, ChannelReport, ClassRule};
use crate::dsp::{bandpass_zero_phase, best_lag, demean};
use crate::error::{Error, Result};
use crate::model::{PhysioSignal, RadarCube, Unit, VitalEstimate};
use crate::preprocess::cube_range_time;
use crate::range_fusion::{fuse_range_bins, BinSignalMatrix, FusionDiagnostics, MAX_DELAY_S};
use crate::range_select::{select_with_fallback, BandSpec, CfarParams, Selection};
use crate::template::{default_banks, extract_vitals, Banks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineId {
    Ref1,
    Ref2,
    Proposed,
}

impl PipelineId {
    pub const ALL: [PipelineId; 3] = [PipelineId::Ref1, PipelineId::Ref2, PipelineId::Proposed];

    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineId::Ref1 => "ref1",
            PipelineId::Ref2 => "ref2",
            PipelineId::Proposed => "proposed",
        }
    }
}

impl fmt::Display for PipelineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ref1" => Ok(PipelineId::Ref1),
            "ref2" => Ok(PipelineId::Ref2),
            "proposed" => Ok(PipelineId::Proposed),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessOptions {
    pub cfar: CfarParams,
    pub bands: BandSpec,
    pub class_rule: ClassRule,
}

/// Intermediate products kept for reports.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub selected_bins: Vec<Vec<usize>>,
    pub selection_fallback: Vec<bool>,
    pub range_fusion: Vec<FusionDiagnostics>,
    pub channel_reports: Vec<ChannelReport>,
    pub channel_weights: Vec<f64>,
    pub resp_stream_fallback: bool,
    pub heart_stream_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub estimate: VitalEstimate,
    pub diagnostics: Diagnostics,
}

fn select_all(cube: &RadarCube, opts: &ProcessOptions) -> Result<Vec<Selection>> {
    cube_range_time(cube)?
        .par_iter()
        .map(|m| select_with_fallback(m, opts.cfar, &opts.bands))
        .collect()
}

/// One slow-time signal per channel: the best bin (Ref1) or the MRC fusion
/// of all selected bins (Ref2, proposed).
fn channel_signals(
    selections: &[Selection],
    multi_bin: bool,
) -> Result<(Vec<PhysioSignal>, Vec<FusionDiagnostics>)> {
    let fused: Vec<(PhysioSignal, FusionDiagnostics)> = selections
        .par_iter()
        .map(|sel| {
            let used = if multi_bin {
                &sel.bins[..]
            } else {
                &sel.bins[..1]
            };
            let phases: Vec<&PhysioSignal> = used.iter().map(|c| &c.phase).collect();
            let y =
                BinSignalMatrix::from_signals(&phases, used.iter().map(|c| c.bin_index).collect())?;
            fuse_range_bins(&y)
        })
        .collect::<Result<_>>()?;
    Ok(fused.into_iter().unzip())
}

/// weight_i = max(0, mean_{j≠i} max-lag normalized xcorr(i, j)),
/// normalized; equal weights when every channel scores zero.
pub fn correlation_weights(signals: &[PhysioSignal]) -> Vec<f64> {
    let n = signals.len();
    if n == 1 {
        return vec![1.0];
    }
    let rate = signals[0].rate_hz;
    let max_lag = (MAX_DELAY_S * rate).round() as usize;
    let rows: Vec<Vec<f64>> = signals.iter().map(|s| demean(&s.samples)).collect();
    let mut corr = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = best_lag(&rows[i], &rows[j], max_lag, false).1;
            corr[i][j] = c;
            corr[j][i] = c;
        }
    }
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let m = (0..n).filter(|&j| j != i).map(|j| corr[i][j]).sum::<f64>() / (n - 1) as f64;
            m.max(0.0)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

fn weighted_sum(signals: &[PhysioSignal], weights: &[f64]) -> Result<PhysioSignal> {
    let mut out = vec![0.0; signals[0].samples.len()];
    for (s, w) in signals.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(&s.samples) {
            *o += w * v;
        }
    }
    PhysioSignal::new(demean(&out), signals[0].rate_hz, Unit::Radians)
}

fn band_split(sig: &PhysioSignal, bands: &BandSpec) -> Result<(PhysioSignal, PhysioSignal)> {
    let r = bandpass_zero_phase(
        &sig.samples,
        sig.rate_hz,
        bands.resp_band.0,
        bands.resp_band.1,
    );
    let h = bandpass_zero_phase(
        &sig.samples,
        sig.rate_hz,
        bands.heart_band.0,
        bands.heart_band.1,
    );
    Ok((
        PhysioSignal::new(r, sig.rate_hz, Unit::Radians)?,
        PhysioSignal::new(h, sig.rate_hz, Unit::Radians)?,
    ))
}

fn run_reference(
    cube: &RadarCube,
    multi_bin: bool,
    opts: &ProcessOptions,
    banks: &Banks,
) -> Result<ProcessOutput> {
    let selections = select_all(cube, opts)?;
    let (signals, fusion) = channel_signals(&selections, multi_bin)?;
    let weights = correlation_weights(&signals);
    let fused = weighted_sum(&signals, &weights)?;
    let (resp, heart) = band_split(&fused, &opts.bands)?;
    let estimate = extract_vitals(&resp, &heart, banks)?;
    Ok(ProcessOutput {
        estimate,
        diagnostics: Diagnostics {
            selected_bins: selections
                .iter()
                .map(|s| s.bins.iter().map(|c| c.bin_index).collect())
                .collect(),
            selection_fallback: selections.iter().map(|s| s.fallback).collect(),
            range_fusion: fusion,
            channel_weights: weights,
            ..Diagnostics::default()
        },
    })
}

/// Band-passed signal of the channel with the highest SNR in that band.
fn best_single(
    signals: &[PhysioSignal],
    reports: &[ChannelReport],
    band: (f64, f64),
    resp: bool,
) -> Result<PhysioSignal> {
    let key = |r: &ChannelReport| if resp { r.snr.snr_b_db } else { r.snr.snr_h_db };
    let best = (0..reports.len())
        .max_by(|&a, &b| {
            key(&reports[a])
                .total_cmp(&key(&reports[b]))
                .then(reports[b].channel_id.cmp(&reports[a].channel_id))
        })
        .ok_or(Error::StreamEmpty(if resp {
            "respiration"
        } else {
            "heart"
        }))?;
    let s = &signals[best];
    PhysioSignal::new(
        bandpass_zero_phase(&s.samples, s.rate_hz, band.0, band.1),
        s.rate_hz,
        Unit::Radians,
    )
}

fn run_proposed(cube: &RadarCube, opts: &ProcessOptions, banks: &Banks) -> Result<ProcessOutput> {
    let selections = select_all(cube, opts)?;
    let (signals, fusion) = channel_signals(&selections, true)?;
    let snrs = signals
        .par_iter()
        .map(|s| band_snr(s, &opts.bands))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<usize> = (0..signals.len()).collect();
    let reports = build_reports(&ids, &snrs, opts.class_rule);
    let (resp, heart) = fuse_by_class(&signals, &reports, &opts.bands);
    let (resp, resp_fb) = match resp {
        Ok(s) => (s, false),
        Err(Error::StreamEmpty(_)) => (
            best_single(&signals, &reports, opts.bands.resp_band, true)?,
            true,
        ),
        Err(e) => return Err(e),
    };
    let (heart, heart_fb) = match heart {
        Ok(s) => (s, false),
        Err(Error::StreamEmpty(_)) => (
            best_single(&signals, &reports, opts.bands.heart_band, false)?,
            true,
        ),
        Err(e) => return Err(e),
    };
    let estimate = extract_vitals(&resp, &heart, banks)?;
    Ok(ProcessOutput {
        estimate,
        diagnostics: Diagnostics {
            selected_bins: selections
                .iter()
                .map(|s| s.bins.iter().map(|c| c.bin_index).collect())
                .collect(),
            selection_fallback: selections.iter().map(|s| s.fallback).collect(),
            range_fusion: fusion,
            channel_reports: reports,
            channel_weights: Vec::new(),
            resp_stream_fallback: resp_fb,
            heart_stream_fallback: heart_fb,
        },
    })
}

pub fn run_pipeline(
    cube: &RadarCube,
    method: PipelineId,
    opts: &ProcessOptions,
    banks: &Banks,
) -> Result<ProcessOutput> {
    opts.bands.validate()?;
    match method {
        PipelineId::Ref1 => run_reference(cube, false, opts, banks),
        PipelineId::Ref2 => run_reference(cube, true, opts, banks),
        PipelineId::Proposed => run_proposed(cube, opts, banks),
    }
}

/// Default options and banks.
pub fn process_cube(cube: &RadarCube, method: PipelineId) -> Result<VitalEstimate> {
    Ok(run_pipeline(cube, method, &ProcessOptions::default(), default_banks())?.estimate)
}

pub fn ref1_pipeline(cube: &RadarCube) -> Result<VitalEstimate> {
    process_cube(cube, PipelineId::Ref1)
}

pub fn ref2_pipeline(cube: &RadarCube) -> Result<VitalEstimate> {
    process_cube(cube, PipelineId::Ref2)
}

pub fn proposed_pipeline(cube: &RadarCube) -> Result<VitalEstimate> {
    process_cube(cube, PipelineId::Proposed)
}
