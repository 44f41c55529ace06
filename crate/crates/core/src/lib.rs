//! Pressure transients, impulse-response matrices and cross-sectional area
//! reconstruction on tree-shaped pipe networks.
//!
//! The crate is organised the way the data flows:
//!
//! - [`network`]: validated tree networks, travel times, action times and
//!   admissible sets.
//! - [`forward`]: method-of-characteristics waterhammer solver used to
//!   synthesise boundary measurements.
//! - [`irm`]: impulse-response matrices, either from exact wavefront tracking
//!   on piecewise-uniform networks or from simulated step responses.
//! - [`inversion`]: the boundary-control solve that turns an impulse-response
//!   matrix into internal volumes and areas.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forward;
pub mod inversion;
pub mod irm;
pub mod network;
pub mod presets;

pub use error::{Error, Result};
pub use network::{Network, NetworkSpec, PointOnPipe};
