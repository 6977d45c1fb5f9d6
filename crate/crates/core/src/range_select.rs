//! Effective range-bin selection: CA-CFAR candidates, dominant-band check
//! and the in-band/out-of-band energy-ratio gate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{periodogram, Spectrum};
use crate::error::{Error, Result};
use crate::model::{PhysioSignal, RangeTimeMatrix, HEART_BAND, RESP_BAND};
use crate::preprocess::extract_phase;

/// Lowest frequency considered by every slow-time spectrum.
pub const MIN_FREQ_HZ: f64 = 0.05;
/// Zero-padded FFT length of slow-time spectra.
pub const SPECTRUM_NFFT: usize = 1024;
/// Bins this close to DC (circularly) hold the residue of fast-time mean
/// removal and are never candidates.
pub const DC_GUARD_BINS: usize = 3;

fn clear_of_dc(bin: usize, n: usize) -> bool {
    bin.min(n - bin) > DC_GUARD_BINS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Respiration,
    Heart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub resp_band: (f64, f64),
    pub heart_band: (f64, f64),
    pub energy_ratio_threshold: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            resp_band: RESP_BAND,
            heart_band: HEART_BAND,
            energy_ratio_threshold: 5.0,
        }
    }
}

impl BandSpec {
    pub fn band(&self, b: Band) -> (f64, f64) {
        match b {
            Band::Respiration => self.resp_band,
            Band::Heart => self.heart_band,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r, h) = (self.resp_band, self.heart_band);
        if !(0.0 < r.0 && r.0 < r.1 && r.1 <= h.0 && h.0 < h.1) {
            return Err(Error::InvalidConfig(
                "bands must be ordered and disjoint".into(),
            ));
        }
        if !(self.energy_ratio_threshold > 1.0) {
            return Err(Error::InvalidConfig(
                "energy ratio threshold must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarParams {
    pub guard: usize,
    pub train: usize,
    pub pfa: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        Self {
            guard: 2,
            train: 8,
            pfa: 1e-3,
        }
    }
}

impl CfarParams {
    /// α = 2T·(pfa^(−1/2T) − 1)
    pub fn scale(&self) -> f64 {
        let n = 2.0 * self.train as f64;
        n * (self.pfa.powf(-1.0 / n) - 1.0)
    }

    fn validate(&self) -> Result<()> {
        if self.train == 0 || !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cfar needs train >= 1 and 0 < pfa < 1, got train={} pfa={}",
                self.train, self.pfa
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveBin {
    pub bin_index: usize,
    pub dominant_band: Band,
    pub energy_ratio: f64,
}

/// Cell-averaging CFAR over a power profile. Edge cells take all 2T
/// training cells from the side that has room, so the profile must hold
/// at least 2G + 3T + 1 cells.
pub fn cfar_detect(profile: &[f64], params: CfarParams) -> Result<Vec<usize>> {
    params.validate()?;
    let (g, t) = (params.guard, params.train);
    let needed = 2 * g + 3 * t + 1;
    let n = profile.len();
    if n < needed {
        return Err(Error::Window { len: n, needed });
    }
    let alpha = params.scale();
    let sum = |a: usize, b: usize| profile[a..b].iter().sum::<f64>();
    let mut hits = Vec::new();
    for i in 0..n {
        let noise = if i < g + t {
            sum(i + g + 1, i + g + 1 + 2 * t)
        } else if i + g + t >= n {
            sum(i - g - 2 * t, i - g)
        } else {
            sum(i - g - t, i - g) + sum(i + g + 1, i + g + 1 + t)
        } / (2 * t) as f64;
        if profile[i] > alpha * noise {
            hits.push(i);
        }
    }
    Ok(hits)
}

/// CFAR on the slow-time mean power of every range bin, outside the DC guard.
pub fn cfar_candidates(matrix: &RangeTimeMatrix, params: CfarParams) -> Result<Vec<usize>> {
    let profile = matrix.power_profile();
    let n = profile.len();
    Ok(cfar_detect(&profile, params)?
        .into_iter()
        .filter(|&b| clear_of_dc(b, n))
        .collect())
}

pub fn phase_spectrum(sig: &PhysioSignal) -> Spectrum {
    periodogram(&sig.samples, sig.rate_hz, SPECTRUM_NFFT)
}

/// Band holding the spectral peak over [0.05 Hz, Nyquist].
pub fn classify_peak(psd: &Spectrum, bands: &BandSpec) -> Option<Band> {
    let nyq = psd.freq(psd.power.len() - 1);
    let k = psd.argmax_in(MIN_FREQ_HZ, nyq)?;
    let f = psd.freq(k);
    if f >= bands.resp_band.0 && f < bands.resp_band.1 {
        Some(Band::Respiration)
    } else if f >= bands.heart_band.0 && f <= bands.heart_band.1 {
        Some(Band::Heart)
    } else {
        None
    }
}

/// E_in / E_out with E_out taken over [0.05 Hz, Nyquist] outside `band`.
pub fn energy_ratio(psd: &Spectrum, band: (f64, f64)) -> f64 {
    let nyq = psd.freq(psd.power.len() - 1);
    let (mut e_in, mut e_out) = (0.0, 0.0);
    for k in psd.range(MIN_FREQ_HZ, nyq) {
        let f = psd.freq(k);
        if f >= band.0 && f <= band.1 {
            e_in += psd.power[k];
        } else {
            e_out += psd.power[k];
        }
    }
    let floor = (f64::EPSILON * (e_in + e_out)).max(f64::MIN_POSITIVE);
    e_in / e_out.max(floor)
}

/// A CFAR candidate after the band and ratio checks, with its phase.
#[derive(Debug, Clone)]
pub struct CandidateBin {
    pub bin_index: usize,
    pub band: Option<Band>,
    pub energy_ratio: f64,
    pub phase: PhysioSignal,
}

fn evaluate_candidates(
    matrix: &RangeTimeMatrix,
    bins: &[usize],
    bands: &BandSpec,
) -> Vec<CandidateBin> {
    bins.par_iter()
        .filter_map(|&b| {
            let phase = extract_phase(matrix, b).ok()?;
            let psd = phase_spectrum(&phase);
            let band = classify_peak(&psd, bands);
            let energy_ratio = match band {
                Some(band) => energy_ratio(&psd, bands.band(band)),
                None => {
                    energy_ratio(&psd, bands.resp_band).max(energy_ratio(&psd, bands.heart_band))
                }
            };
            Some(CandidateBin {
                bin_index: b,
                band,
                energy_ratio,
                phase,
            })
        })
        .collect()
}

fn by_ratio(a: &CandidateBin, b: &CandidateBin) -> std::cmp::Ordering {
    b.energy_ratio
        .total_cmp(&a.energy_ratio)
        .then(a.bin_index.cmp(&b.bin_index))
}

/// Bins passing CFAR, the band check and ratio > threshold, ordered by
/// descending ratio.
pub fn select_effective_bins(
    matrix: &RangeTimeMatrix,
    cfar: CfarParams,
    bands: &BandSpec,
) -> Result<Vec<EffectiveBin>> {
    Ok(select_with_phases(matrix, cfar, bands)?
        .into_iter()
        .map(|c| EffectiveBin {
            bin_index: c.bin_index,
            dominant_band: c.band.expect("selected bins carry a band"),
            energy_ratio: c.energy_ratio,
        })
        .collect())
}

fn select_with_phases(
    matrix: &RangeTimeMatrix,
    cfar: CfarParams,
    bands: &BandSpec,
) -> Result<Vec<CandidateBin>> {
    let candidates = cfar_candidates(matrix, cfar)?;
    let mut kept: Vec<CandidateBin> = evaluate_candidates(matrix, &candidates, bands)
        .into_iter()
        .filter(|c| c.band.is_some() && c.energy_ratio > bands.energy_ratio_threshold)
        .collect();
    kept.sort_by(by_ratio);
    Ok(kept)
}

/// Selection that always yields at least one bin: when nothing passes,
/// the CFAR candidate with the best ratio, or failing that the strongest
/// bin outside the DC guard.
#[derive(Debug, Clone)]
pub struct Selection {
    pub bins: Vec<CandidateBin>,
    pub fallback: bool,
}

pub fn select_with_fallback(
    matrix: &RangeTimeMatrix,
    cfar: CfarParams,
    bands: &BandSpec,
) -> Result<Selection> {
    let kept = select_with_phases(matrix, cfar, bands)?;
    if !kept.is_empty() {
        return Ok(Selection {
            bins: kept,
            fallback: false,
        });
    }
    let candidates = cfar_candidates(matrix, cfar)?;
    let mut all = evaluate_candidates(matrix, &candidates, bands);
    all.sort_by(by_ratio);
    if let Some(best) = all.into_iter().next() {
        return Ok(Selection {
            bins: vec![best],
            fallback: true,
        });
    }
    let profile = matrix.power_profile();
    let n = profile.len();
    let strongest = (0..n)
        .filter(|&b| clear_of_dc(b, n))
        .max_by(|&a, &b| profile[a].total_cmp(&profile[b]).then(b.cmp(&a)))
        .ok_or(Error::DegenerateSignal {
            stage: "range_select",
        })?;
    let mut fallback = evaluate_candidates(matrix, &[strongest], bands);
    if fallback.is_empty() {
        return Err(Error::DegenerateSignal {
            stage: "range_select",
        });
    }
    Ok(Selection {
        bins: vec![fallback.remove(0)],
        fallback: true,
    })
}
