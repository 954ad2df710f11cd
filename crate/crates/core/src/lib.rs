//! Motion representation, curve geometry, procedural data, structured
//! prompts, task compilation and evaluation metrics for in-context motion
//! generation.

pub mod curves;
pub mod motion;
pub mod synth;
pub mod prompt;
pub mod dataset;
pub mod metrics;
pub mod tasks;
