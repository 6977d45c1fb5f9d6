//! Radar vital-sign toolkit: FMCW cube synthesis, range-bin and channel
//! fusion, template-based rate extraction and evaluation.

pub mod channel_fusion;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod range_fusion;
pub mod range_select;
pub mod sim;
pub mod template;

pub use error::{Error, ErrorKind, Result};
pub use model::{
    derive_constants, displacement_to_phase, phase_to_displacement, DerivedConstants, PhysioSignal,
    RadarConfig, RadarCube, RangeTimeMatrix, Unit, VitalEstimate,
};
pub use pipeline::{process_cube, PipelineId};
