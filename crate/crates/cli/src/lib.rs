//! Conductor runtime: the engine thread, the operator API and live
//! landmark input.

pub mod api;
pub mod landmarks;
pub mod runtime;
