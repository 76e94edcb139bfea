//! Hybrid trajectory prediction for two interacting vehicles.
//!
//! Combines a learned joint-trajectory sampler (a small CVAE) with a
//! planning-based rationality model (continuous max-ent IRL plus a
//! finite-horizon MPC planner). Sampled joint futures are filtered against
//! the ego plan, augmented with optimal trajectories, reweighted by the
//! learned cost and resampled into the final prediction set.

pub mod dtw;
pub mod geometry;
pub mod irl;
pub mod nn;
pub mod planner;
pub mod scenario;

pub use geometry::{CartesianPoint, FrenetState, ReferencePath, Trajectory, VehicleFootprint};
