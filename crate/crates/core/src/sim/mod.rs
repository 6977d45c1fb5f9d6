//! Synthetic MIMO FMCW chest-echo generation.

pub mod layout;
pub mod motion;
pub mod scenario;

pub use layout::{default_layout, BodyRegion, ChannelCoupling, Coverage, Layout, Scatterer};
pub use motion::{
    cached_vdp_cycle, heartbeat_motion, respiration_motion, respiration_motion_with_tau,
    vdp_limit_cycle, RespCycle, RespShape, TimeGrid, VdpCycle,
};
pub use scenario::{scatterer_displacement, synthesize_cube, RbmModel, Scenario};
