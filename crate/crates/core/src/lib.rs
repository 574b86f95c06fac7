//! Dynamic treatment regime simulation and benchmarking.
//!
//! Four disease simulators share the [`pomdp::Environment`] contract. The
//! [`realism`] wrapper adds patient variability, observation noise and
//! missing values on top of any of them.

pub mod agents;
pub mod envs;
pub mod harness;
pub mod io;
pub mod nn;
pub mod ode;
pub mod pomdp;
pub mod realism;
pub mod rng;
