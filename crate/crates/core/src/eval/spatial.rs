//! Per-channel band SNR maps.

use rayon::prelude::*;

use crate::channel_fusion::{band_snr, SnrPair};
use crate::error::Result;
use crate::model::RadarCube;
use crate::pipeline::ProcessOptions;
use crate::preprocess::cube_range_time;
use crate::range_fusion::{fuse_range_bins, BinSignalMatrix};
use crate::range_select::select_with_fallback;

/// Bin selection and range fusion per channel, then band SNR, in channel order.
pub fn snr_spatial_map(cube: &RadarCube, opts: &ProcessOptions) -> Result<Vec<SnrPair>> {
    cube_range_time(cube)?
        .par_iter()
        .map(|m| {
            let sel = select_with_fallback(m, opts.cfar, &opts.bands)?;
            let phases: Vec<_> = sel.bins.iter().map(|c| &c.phase).collect();
            let y = BinSignalMatrix::from_signals(
                &phases,
                sel.bins.iter().map(|c| c.bin_index).collect(),
            )?;
            let (fused, _) = fuse_range_bins(&y)?;
            band_snr(&fused, &opts.bands)
        })
        .collect()
}
