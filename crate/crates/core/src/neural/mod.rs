//! Dense MLP machinery: forward pass, exact backpropagation, Adam and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
mod mlp;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use mlp::{Activation, DenseLayer, Mlp, Tape};
pub use params::Parameters;
