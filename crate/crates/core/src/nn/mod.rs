//! Layers, parameter storage, the Adam optimizer and the plateau scheduler.

mod adam;
pub mod conv;
mod init;
mod layers;
mod params;
mod scheduler;

pub use adam::{Adam, AdamConfig};
pub use conv::ConvSpec;
pub use init::Init;
pub use layers::{Conv3d, ConvTranspose3d, Linear};
pub use params::ParamStore;
pub use scheduler::{PlateauMode, PlateauScheduler};

/// Slope of the leaky ReLU used throughout the networks.
pub const LEAKY_SLOPE: f64 = 0.2;
