//! Sampling-based adaptive motion planning.
//!
//! An RRT* global planner produces waypoint sequences over an occupancy grid;
//! an online-fitted mixture of linear dynamical systems, constrained so that
//! every component is contracting, turns the active waypoint into an
//! attractor and drives an Ackermann vehicle toward it at control rate. A
//! supervisor decides when a new plan replaces the active field, enforces an
//! average dwell-time bound on switches and keeps the commanded speed
//! continuous across them.
//!
//! The [`experiments`] module wires everything into a deterministic
//! fixed-step co-simulation with perturbation schedules and the replanning,
//! recovery and stress benchmarks. Each major capability has a runnable
//! program under `examples/`.

pub mod cli;
pub mod ds;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod planner;
pub mod rng;
pub mod supervisor;
pub mod vehicle;

pub use geometry::{wrap_angle, Pose, Vec2};
