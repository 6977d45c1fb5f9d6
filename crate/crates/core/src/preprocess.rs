//! `.rcube` I/O and the fast-time chain: DC removal, Blackman window,
//! range FFT, per-bin phase extraction.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dsp::{blackman, fft_plan, unwrap};
use crate::error::{Error, Result};
use crate::model::{PhysioSignal, RadarConfig, RadarCube, RangeTimeMatrix, Unit};

pub const MAGIC: &[u8; 4] = b"RCUB";
pub const VERSION: u32 = 1;
/// magic + 4 × u32 + 6 × f64
pub const HEADER_LEN: usize = 4 + 4 * 4 + 6 * 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeFileHeader {
    pub num_channels: u32,
    pub num_chirps: u32,
    pub samples_per_chirp: u32,
    pub slow_time_rate_hz: f64,
    pub fast_time_rate_hz: f64,
    pub carrier_freq_hz: f64,
    pub chirp_slope_hz_per_s: f64,
    pub bandwidth_hz: f64,
    pub chirp_duration_s: f64,
}

impl CubeFileHeader {
    pub fn payload_len(&self) -> usize {
        self.num_channels as usize * self.num_chirps as usize * self.samples_per_chirp as usize * 8
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.num_channels, self.num_chirps, self.samples_per_chirp] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [
            self.slow_time_rate_hz,
            self.fast_time_rate_hz,
            self.carrier_freq_hz,
            self.chirp_slope_hz_per_s,
            self.bandwidth_hz,
            self.chirp_duration_s,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic, expected RCUB".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Length(format!(
                "header needs {HEADER_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let u =
            |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let f = |i: usize| {
            f64::from_le_bytes(bytes[20 + 8 * i..28 + 8 * i].try_into().expect("8 bytes"))
        };
        let version = u(0);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(Self {
            num_channels: u(1),
            num_chirps: u(2),
            samples_per_chirp: u(3),
            slow_time_rate_hz: f(0),
            fast_time_rate_hz: f(1),
            carrier_freq_hz: f(2),
            chirp_slope_hz_per_s: f(3),
            bandwidth_hz: f(4),
            chirp_duration_s: f(5),
        })
    }
}

/// Decode an `.rcube` byte buffer. The config is rebuilt as one TX by
/// `num_channels` RX with the range-bin count rounded up to a power of two.
pub fn parse_cube(bytes: &[u8]) -> Result<RadarCube> {
    let h = CubeFileHeader::decode(bytes)?;
    if h.num_channels == 0 || h.num_chirps == 0 || h.samples_per_chirp == 0 {
        return Err(Error::Length("cube dimensions must be >= 1".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != h.payload_len() {
        return Err(Error::Length(format!(
            "payload is {} bytes, header implies {}",
            payload.len(),
            h.payload_len()
        )));
    }
    let config = RadarConfig {
        carrier_freq_hz: h.carrier_freq_hz,
        bandwidth_hz: h.bandwidth_hz,
        chirp_slope_hz_per_s: h.chirp_slope_hz_per_s,
        chirp_duration_s: h.chirp_duration_s,
        num_tx: 1,
        num_rx: h.num_channels as usize,
        num_range_bins: (h.samples_per_chirp as usize).next_power_of_two(),
        slow_time_rate_hz: h.slow_time_rate_hz,
        fast_time_rate_hz: h.fast_time_rate_hz,
    };
    config.validate()?;
    let data: Vec<Complex64> = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
            let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    RadarCube::new(
        config,
        h.num_chirps as usize,
        h.samples_per_chirp as usize,
        data,
    )
}

/// Encode a cube; samples are narrowed to f32.
pub fn write_cube(cube: &RadarCube) -> Vec<u8> {
    let c = &cube.config;
    let h = CubeFileHeader {
        num_channels: cube.num_channels() as u32,
        num_chirps: cube.num_chirps as u32,
        samples_per_chirp: cube.samples_per_chirp as u32,
        slow_time_rate_hz: c.slow_time_rate_hz,
        fast_time_rate_hz: c.fast_time_rate_hz,
        carrier_freq_hz: c.carrier_freq_hz,
        chirp_slope_hz_per_s: c.chirp_slope_hz_per_s,
        bandwidth_hz: c.bandwidth_hz,
        chirp_duration_s: c.chirp_duration_s,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + h.payload_len());
    h.encode(&mut out);
    for z in cube.data() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn read_cube_file(path: &std::path::Path) -> Result<RadarCube> {
    parse_cube(&std::fs::read(path)?)
}

pub fn write_cube_file(path: &std::path::Path, cube: &RadarCube) -> Result<()> {
    std::fs::write(path, write_cube(cube))?;
    Ok(())
}

/// Subtract the fast-time mean of every chirp.
pub fn remove_dc(frames: &[Complex64], samples_per_chirp: usize) -> Vec<Complex64> {
    let mut out = frames.to_vec();
    for chirp in out.chunks_mut(samples_per_chirp) {
        let m = chirp.iter().sum::<Complex64>() / chirp.len() as f64;
        for z in chirp.iter_mut() {
            *z -= m;
        }
    }
    out
}

/// Blackman-windowed range FFT of DC-free chirps. Chirps are zero-padded or
/// truncated to `num_range_bins`.
pub fn range_transform(
    frames: &[Complex64],
    samples_per_chirp: usize,
    num_range_bins: usize,
    channel_id: usize,
    slow_time_rate_hz: f64,
) -> Result<RangeTimeMatrix> {
    if samples_per_chirp == 0 || frames.len() % samples_per_chirp != 0 {
        return Err(Error::Length(format!(
            "{} samples do not split into chirps of {samples_per_chirp}",
            frames.len()
        )));
    }
    if samples_per_chirp != num_range_bins {
        log::warn!("fast-time length {samples_per_chirp} resized to {num_range_bins} range bins");
    }
    let num_slow = frames.len() / samples_per_chirp;
    let used = samples_per_chirp.min(num_range_bins);
    let w = blackman(used);
    let fft = fft_plan(num_range_bins);
    let mut data = vec![Complex64::new(0.0, 0.0); num_range_bins * num_slow];
    let mut buf = vec![Complex64::new(0.0, 0.0); num_range_bins];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (p, chirp) in frames.chunks_exact(samples_per_chirp).enumerate() {
        buf.fill(Complex64::new(0.0, 0.0));
        for i in 0..used {
            buf[i] = chirp[i] * w[i];
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (b, z) in buf.iter().enumerate() {
            data[b * num_slow + p] = *z;
        }
    }
    RangeTimeMatrix::new(
        channel_id,
        num_range_bins,
        num_slow,
        slow_time_rate_hz,
        data,
    )
}

/// DC removal and range FFT for one channel of a cube.
pub fn channel_range_time(cube: &RadarCube, ch: usize) -> Result<RangeTimeMatrix> {
    let frames = remove_dc(cube.channel(ch), cube.samples_per_chirp);
    range_transform(
        &frames,
        cube.samples_per_chirp,
        cube.config.num_range_bins,
        ch,
        cube.config.slow_time_rate_hz,
    )
}

/// Range-time matrices for every channel, computed in parallel.
pub fn cube_range_time(cube: &RadarCube) -> Result<Vec<RangeTimeMatrix>> {
    (0..cube.num_channels())
        .into_par_iter()
        .map(|ch| channel_range_time(cube, ch))
        .collect()
}

/// Unwrapped slow-time phase of one range bin.
pub fn extract_phase(matrix: &RangeTimeMatrix, bin: usize) -> Result<PhysioSignal> {
    if bin >= matrix.num_bins {
        return Err(Error::InvalidInput(format!(
            "bin {bin} out of range 0..{}",
            matrix.num_bins
        )));
    }
    let row = matrix.row(bin);
    let peak = row.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let zeros = row.iter().filter(|z| z.norm() <= peak * 1e-12).count();
    let fraction = zeros as f64 / row.len().max(1) as f64;
    if fraction > 0.1 {
        return Err(Error::WeakBin { bin, fraction });
    }
    let wrapped: Vec<f64> = row.iter().map(|z| z.arg()).collect();
    PhysioSignal::new(unwrap(&wrapped), matrix.slow_time_rate_hz, Unit::Radians)
}
