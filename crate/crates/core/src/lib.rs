//! Event-camera simulation, event stacking and the phase-to-phase
//! reconstruction, restoration and super-resolution pipeline.

pub mod autograd;
pub mod commands;
pub mod error;
pub mod events;
pub mod imageio;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod optim;
pub mod sim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
