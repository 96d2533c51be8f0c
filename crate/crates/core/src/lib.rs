//! Dual-agent spatial reasoning over explicit 3D geometry.

pub mod agents;
pub mod backends;
pub mod dsl;
pub mod geometry;
pub mod harness;
pub mod keys;
pub mod labels;
pub mod perception;
pub mod scene_sim;
