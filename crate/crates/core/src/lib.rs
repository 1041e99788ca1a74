//! Meta-transfer of self-supervised graph features.
//!
//! This crate carries the numerical core: dense tensors with reverse-mode
//! differentiation, functional-connectivity graphs, the spatio-temporal graph
//! convolutional backbone, the contrastive and supervised objectives, the
//! bi-level trainer with its comparison strategies, the EMD domain-similarity
//! diagnostic and the linear-probing toolkit.
//!
//! It is `no_std` and only needs `alloc`. File formats, configuration and the
//! command line live in the `metsk` companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod domsim;
pub mod error;
pub mod meta;
pub mod numerics;
pub mod objectives;
pub mod probe;
pub mod rng;
pub mod stgcn;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::data::{BrainGraph, Dataset, Domain, SubjectRecord, SynthSpec};
    pub use crate::error::{Error, Result};
    pub use crate::meta::{MetaConfig, Strategy, TrainState};
    pub use crate::numerics::{Tape, Tensor, Var};
    pub use crate::stgcn::{ModelConfig, ModelParams};
}
