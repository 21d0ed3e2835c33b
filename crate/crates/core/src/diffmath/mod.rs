//! Numerical substrate: dense and sparse tensors, a reverse-mode tape over
//! a closed set of matrix primitives, parameter storage with Adam state,
//! Glorot initialization, inverted dropout and checkpoint files.

mod adam;
pub mod checkpoint;
mod init;
mod params;
mod sparse;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use init::{dropout, dropout_mask, glorot_bound, glorot_init, glorot_uniform};
pub use params::{ParamEntry, ParamId, ParamStore};
pub use sparse::SparseAdjacency;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
