//! Multirelational link prediction on two-layer drug/protein graphs.
//!
//! The crate couples a relation-aware graph convolutional encoder with a
//! tensor-factorization decoder (a shared global interaction matrix scaled
//! by per-relation diagonals for drug pairs, bilinear forms otherwise),
//! trained end to end with negative-sampling cross-entropy. Directly fitted
//! RESCAL and DEDICOM baselines, ranking metrics, exploratory statistics and
//! a planted synthetic generator sit alongside it.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the double-precision flavour used by tests and
//! desk-scale runs.

pub mod baselines;
pub mod cli;
pub mod datagen;
pub mod decoder;
pub mod diffmath;
pub mod eda;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use graph::{EdgeSplit, MultimodalGraph, NodeKind, NodeRef, RelationFamily, RelationId};

/// Dense tensor in double precision.
pub type Tensor64 = diffmath::Tensor<f64>;
/// Dense tensor in single precision.
pub type Tensor32 = diffmath::Tensor<f32>;
/// Parameter store in double precision.
pub type ParamStore64 = diffmath::ParamStore<f64>;
/// Parameter store in single precision.
pub type ParamStore32 = diffmath::ParamStore<f32>;
/// Recording tape in double precision.
pub type Tape64 = diffmath::Tape<f64>;
/// Node embeddings in double precision.
pub type NodeEmbeddings64 = encoder::NodeEmbeddings<f64>;
/// Decoder parameters in double precision.
pub type DecoderParams64 = decoder::DecoderParams<f64>;
