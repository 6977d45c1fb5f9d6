//! Maximal-ratio combining of the effective range bins of one channel.

use serde::{Deserialize, Serialize};

use crate::dsp::{bandpass_zero_phase, best_lag, demean, dot, shift};
use crate::error::{Error, Result};
use crate::model::{PhysioSignal, Unit, HEART_BAND, RESP_BAND};

/// Largest inter-bin delay searched, seconds.
pub const MAX_DELAY_S: f64 = 0.5;

/// Mean-removed phase rows of the effective bins of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSignalMatrix {
    rows: Vec<Vec<f64>>,
    pub bins: Vec<usize>,
    pub rate_hz: f64,
}

impl BinSignalMatrix {
    pub fn new(rows: Vec<Vec<f64>>, bins: Vec<usize>, rate_hz: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput(
                "bin signal matrix needs at least one row".into(),
            ));
        }
        let m = rows[0].len();
        if m < 2 || rows.iter().any(|r| r.len() != m) || bins.len() != rows.len() {
            return Err(Error::InvalidInput(
                "bin signal rows must share one length >= 2".into(),
            ));
        }
        if !(rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rate must be positive, got {rate_hz}"
            )));
        }
        Ok(Self {
            rows: rows.iter().map(|r| demean(r)).collect(),
            bins,
            rate_hz,
        })
    }

    pub fn from_signals(signals: &[&PhysioSignal], bins: Vec<usize>) -> Result<Self> {
        let rate = signals.first().map_or(0.0, |s| s.rate_hz);
        Self::new(
            signals.iter().map(|s| s.samples.clone()).collect(),
            bins,
            rate,
        )
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Copy with every row band-passed to [lo, hi]; unchanged when `hi`
    /// is not below Nyquist.
    pub fn band_limited(&self, lo: f64, hi: f64) -> BinSignalMatrix {
        if hi >= 0.5 * self.rate_hz {
            return self.clone();
        }
        let rows = self
            .rows
            .iter()
            .map(|r| bandpass_zero_phase(r, self.rate_hz, lo, hi))
            .collect();
        Self {
            rows,
            bins: self.bins.clone(),
            rate_hz: self.rate_hz,
        }
    }

    fn max_lag(&self) -> usize {
        (MAX_DELAY_S * self.rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionDiagnostics {
    pub bins: Vec<usize>,
    pub reference_bin_index: usize,
    pub delays: Vec<isize>,
    pub transfer_coefficients: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Row with the largest summed peak |normalized cross-correlation| against
/// all other rows; lowest index on ties.
pub fn pick_reference_bin(y: &BinSignalMatrix) -> usize {
    let n = y.num_rows();
    if n == 1 {
        return 0;
    }
    let max_lag = y.max_lag();
    let mut sums = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = best_lag(&y.rows[i], &y.rows[j], max_lag, true).1.abs();
            sums[i] += c;
            sums[j] += c;
        }
    }
    let mut best = 0;
    for i in 1..n {
        if sums[i] > sums[best] * (1.0 + 1e-12) + 1e-15 {
            best = i;
        }
    }
    best
}

/// Integer-sample delay of every row against the reference, with the sign
/// of the correlation peak. `shift(row, delay)` aligns a row to the reference.
pub fn estimate_delays_with_polarity(
    y: &BinSignalMatrix,
    reference: usize,
) -> (Vec<isize>, Vec<f64>) {
    let max_lag = y.max_lag();
    y.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if i == reference {
                (0, 1.0)
            } else {
                let (lag, v) = best_lag(row, &y.rows[reference], max_lag, true);
                (lag, if v < 0.0 { -1.0 } else { 1.0 })
            }
        })
        .unzip()
}

pub fn estimate_delays(y: &BinSignalMatrix, reference: usize) -> Vec<isize> {
    estimate_delays_with_polarity(y, reference).0
}

fn aligned_rows(y: &BinSignalMatrix, delays: &[isize]) -> Vec<Vec<f64>> {
    y.rows
        .iter()
        .zip(delays)
        .map(|(r, &d)| shift(r, d))
        .collect()
}

/// Delay-and-sum estimate ŝ of the common waveform and least-squares
/// per-row coefficients h_i = ⟨row_i, ŝ⟩ / ⟨ŝ, ŝ⟩.
pub fn coherent_estimate(
    y: &BinSignalMatrix,
    delays: &[isize],
    polarity: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let aligned = aligned_rows(y, delays);
    let m = aligned[0].len();
    let mut s_hat = vec![0.0; m];
    for (row, p) in aligned.iter().zip(polarity) {
        for (s, v) in s_hat.iter_mut().zip(row) {
            *s += p * v;
        }
    }
    let n = aligned.len() as f64;
    s_hat.iter_mut().for_each(|s| *s /= n);
    let ss = dot(&s_hat, &s_hat);
    if !(ss > 0.0) {
        return Err(Error::DegenerateSignal {
            stage: "range_fusion",
        });
    }
    let h = aligned.iter().map(|r| dot(r, &s_hat) / ss).collect();
    Ok((s_hat, h))
}

/// Σ ω_i·sign(h_i)·row_i with ω_i = |h_i| / Σ|h|, mean removed.
pub fn mrc_fuse(
    y: &BinSignalMatrix,
    delays: &[isize],
    h: &[f64],
) -> Result<(PhysioSignal, Vec<f64>)> {
    let total: f64 = h.iter().map(|v| v.abs()).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights {
            stage: "range_fusion",
        });
    }
    let weights: Vec<f64> = h.iter().map(|v| v.abs() / total).collect();
    let aligned = aligned_rows(y, delays);
    let mut out = vec![0.0; aligned[0].len()];
    for ((row, w), hv) in aligned.iter().zip(&weights).zip(h) {
        let g = w * hv.signum();
        for (o, v) in out.iter_mut().zip(row) {
            *o += g * v;
        }
    }
    Ok((
        PhysioSignal::new(demean(&out), y.rate_hz, Unit::Radians)?,
        weights,
    ))
}

/// Reference pick, delay estimation, coherent estimate and MRC in one call.
/// The first three run on the rows limited to the vital-sign band; the
/// combination applies to the full-band rows.
pub fn fuse_range_bins(y: &BinSignalMatrix) -> Result<(PhysioSignal, FusionDiagnostics)> {
    let est = y.band_limited(RESP_BAND.0, HEART_BAND.1);
    let reference = pick_reference_bin(&est);
    let (delays, polarity) = estimate_delays_with_polarity(&est, reference);
    let (_, h) = coherent_estimate(&est, &delays, &polarity)?;
    let (fused, weights) = mrc_fuse(y, &delays, &h)?;
    Ok((
        fused,
        FusionDiagnostics {
            bins: y.bins.clone(),
            reference_bin_index: reference,
            delays,
            transfer_coefficients: h,
            weights,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn sine(f: f64, delay_s: f64) -> Vec<f64> {
        (0..300)
            .map(|i| (TAU * f * (i as f64 / 20.0 - delay_s)).sin())
            .collect()
    }

    #[test]
    fn single_row_is_identity() {
        let row = sine(0.25, 0.0);
        let y = BinSignalMatrix::new(vec![row.clone()], vec![5], 20.0).unwrap();
        assert_eq!(pick_reference_bin(&y), 0);
        let (fused, d) = fuse_range_bins(&y).unwrap();
        let expect = demean(&row);
        for (a, b) in fused.samples.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(d.weights, vec![1.0]);
    }

    #[test]
    fn identical_rows_tie_to_lowest_index() {
        let r = sine(0.3, 0.0);
        let y = BinSignalMatrix::new(vec![r.clone(), r.clone(), r], vec![1, 2, 3], 20.0).unwrap();
        assert_eq!(pick_reference_bin(&y), 0);
        assert_eq!(estimate_delays(&y, 0), vec![0, 0, 0]);
        let (s, h) = coherent_estimate(&y, &[0, 0, 0], &[1.0; 3]).unwrap();
        assert!(h.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!((s[10] - y.rows()[0][10]).abs() < 1e-12);
    }

    #[test]
    fn delay_of_200ms_is_four_samples() {
        let y =
            BinSignalMatrix::new(vec![sine(0.25, 0.0), sine(0.25, 0.2)], vec![0, 1], 20.0).unwrap();
        assert_eq!(estimate_delays(&y, 0), vec![0, 4]);
    }

    #[test]
    fn scaled_row_gets_double_coefficient() {
        let r = sine(0.25, 0.0);
        let r2: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let y = BinSignalMatrix::new(vec![r, r2], vec![0, 1], 20.0).unwrap();
        let (_, h) = coherent_estimate(&y, &[0, 0], &[1.0, 1.0]).unwrap();
        assert!((h[1] / h[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let y = BinSignalMatrix::new(vec![vec![1.0; 10]], vec![0], 20.0).unwrap();
        assert!(matches!(
            coherent_estimate(&y, &[0], &[1.0]),
            Err(Error::DegenerateSignal { .. })
        ));
        assert!(matches!(
            mrc_fuse(&y, &[0], &[0.0]),
            Err(Error::DegenerateWeights { .. })
        ));
    }
}
