//! Deterministic simulation of engagement between entities.
//!
//! Entities broadcast effort on seven channels. Each receiver interprets
//! that effort as the product of contrast, magnitude, contribution,
//! alignment and preference, focuses on the strongest source, and the
//! pairwise focus pattern determines the relation state of every pair
//! (passive, requested, buildup, engaged). Goal-driven entities modulate
//! their effort to reach target states, closing the loop.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
pub mod focus;
pub mod group;
pub mod model;
pub mod perception;
pub mod relation;
pub mod render;
pub mod scenario;
pub mod signal;
pub mod strategy;
pub mod trace;

pub use engine::{run, step, SimParams, Simulation, Snapshot, TickRecord};
pub use model::{Channel, Entity, EntityId, Point, Pose, RelationState, World};
