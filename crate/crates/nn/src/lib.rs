//! Flow-matching motion transformer: reverse-mode autodiff, the velocity
//! network with four in-context conditioning architectures, rectified-flow
//! training and sampling, checkpoints and evaluation.

pub mod accounting;
pub mod checkpoint;
pub mod error;
pub mod flow;
pub mod layers;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod study;
pub mod tape;
pub mod train;

pub use error::{NnError, Result};
pub use model::{CondArch, ForwardInput, ForwardOut, Model, ModelConfig};
pub use params::{Adam, AdamConfig, Grads, ParamId, ParamStore};
pub use tape::{Mat, Tape, Var};
