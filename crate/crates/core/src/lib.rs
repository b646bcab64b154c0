//! Desk-scale laboratory for studying how a freshly initialized
//! classification head perturbs a pretrained network during fine-tuning.
//!
//! The crate provides a small f64 tensor kernel, an explicit
//! forward/backward feed-forward network with a softmax cross-entropy head,
//! head-initialization strategies (variance scaling and a maximum-entropy
//! low-energy init), per-step error-energy telemetry, SGD/Adam updates with
//! parameter-group masking, binary dataset loaders, and a reproducible
//! experiment runner with CSV output and summary statistics.

pub mod data;
pub mod error;
pub mod init;
pub mod net;
pub mod optim;
pub mod rng;
pub mod telemetry;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use tensor::{Stats, Tensor};
