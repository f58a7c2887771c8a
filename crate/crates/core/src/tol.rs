//! Numeric tolerances shared across the crate.
//!
//! Double precision keeps the drift of a run with thousands of events well
//! under these thresholds, so violations indicate logic bugs rather than
//! round-off.

/// Simultaneity guard: two distinct pairs due to collide closer than this
/// abort the run.
pub const EPS_T: f64 = 1e-9;

/// Contact / overlap tolerance on center distances.
pub const EPS_GEOM: f64 = 1e-7;

/// Relative tolerance for conservation and replay checks.
pub const EPS_NUM: f64 = 1e-9;

/// Ball radius and contact distance for the whole crate: all balls have
/// radius 1, so centers touch at distance 2.
pub const CONTACT: f64 = 2.0;
