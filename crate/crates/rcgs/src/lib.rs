//! Reservoir-computing forecasting of chaotic systems.
//!
//! The pipeline: generate a chaotic driver trajectory, test candidate
//! reservoirs for generalized synchronization with the auxiliary method
//! (a cheap pre-training gate), train a polynomial ridge readout on the
//! synchronized states, forecast autonomously, and certify the trained
//! model by matching its Lyapunov spectrum against the driver's.

pub mod error;
pub mod evaluation;
pub mod gs;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod reservoir;
pub mod search;
pub mod systems;
pub mod training;

pub use error::{Error, Result};
