//! A small dense-network engine: forward and reverse passes, Adam, weight
//! initialisation, finite-difference gradient checks and a checkpoint format.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod init;
mod layer;
mod mlp;
mod scalar;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, half_squared_error, GradCheckOptions, GradCheckReport, GradCheckable, MlpObjective};
pub use init::init_params;
pub use layer::{Activation, DenseLayer, LayerParams};
pub use mlp::{ForwardCache, Mlp, MlpGrads};
pub use scalar::Scalar;
