//! Domain types, geometry and channel construction, exact rate evaluation.

mod channel;
mod config;
mod geometry;
mod rate;
mod state;

pub use channel::{
    build_freespace_channel, build_waveguide_channel, unit_port_phases, ChannelSet,
    FreeSpaceChannel,
};
pub(crate) use channel::cis_neg;
pub use config::{dbm_to_mw, derive_constants, DerivedConstants, Scenario, SystemConfig};
pub use geometry::{build_geometry, Direction, Geometry, Point, User};
pub use rate::{sum_rate, sum_rate_psds, sum_rate_ts, UserRates};
pub use state::{
    backward_amplitude, forward_amplitude, DesignVariables, PrecoderState, Protocol,
    RadiationState, SplittingState, TimeAllocation,
};
pub(crate) use state::c64;
