//! Simulation library for the mutual visibility problem with opaque fat
//! robots carrying slim omnidirectional cameras.

pub mod chain;
pub mod engine;
pub mod experiments;
pub mod geometry;
pub mod protocol;
pub mod visibility;
