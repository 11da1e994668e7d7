//! Motional quantum state tomography from trajectories of the position mean
//! and variance in a non-quadratic trap.

pub mod container;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod nn;
pub mod ode;
pub mod operators;
pub mod pipeline;
pub mod states;

pub use error::{Error, Result};
