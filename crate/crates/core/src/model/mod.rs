//! System configuration, array geometry, channel sampling and dataset I/O.

mod array;
mod channel;
mod config;
pub mod dataset;

pub use array::{
    steering_derivatives, steering_vector, Direction, Upa, PHI_RANGE, THETA_RANGE,
};
pub use channel::{
    derive_seed, msia, sample_comm_channel, sample_realization, sample_sensing_scene, target_response,
    ChannelRealization, CommChannel, SensingScene, SubcarrierGeometry, Target,
};
pub use config::{subcarrier_frequency, SystemConfig};
