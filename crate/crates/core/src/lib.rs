//! Impulsive optimal control with time delays in the drift.
//!
//! The crate simulates measure-driven delayed systems with bounded-variation
//! trajectories, converts controls to and from the compactified auxiliary
//! (graph-completion) form, builds strict-sense approximating sequences,
//! checks maximum-principle conditions for candidate processes, and runs a
//! desk-scale direct transcription to produce candidates worth certifying.
//! Scenario data comes in as versioned JSON with a small expression DSL.

pub mod adjoint;
pub mod approx;
pub mod auxiliary;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod measure;
pub mod pmp;
pub mod problem;
pub mod scenario;
pub mod target;
pub mod trajectory;
pub mod transcribe;

pub use error::{Error, Result};
