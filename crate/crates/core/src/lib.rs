//! Class-conditional flow-matching bridge for unpaired cross-domain
//! translation.
//!
//! One conditional vector field is trained over several domains. A sample is
//! translated by integrating it backward under its own domain to an
//! intermediate time `tau`, then forward under the target domain.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bridge;
pub mod diagnostics;
pub mod domains;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod persist;
pub mod samples;
pub mod tensor;
pub mod train;

pub use bridge::{BridgeConfig, EncodeGuidance, ModelField, TranslationResult, VelocityField};
pub use error::{Error, Result};
pub use model::{DomainLabel, ModelSpec, VectorFieldModel};
pub use samples::SampleSet;
pub use tensor::Tensor;
pub use train::{TrainConfig, TrainOutcome};
