//! Dense tensors with reverse-mode differentiation.
//!
//! Only what the pixel-constrained network needs: same-padded stride-1
//! convolutions with optional weight masks, batch normalization, ReLU,
//! sigmoid/tanh gates, channel scaling, softmax cross-entropy and Adam.
//! Tensors are generic over [`Real`] so that gradient checks can run in
//! `f64` while models train in `f32`. Reductions (loss, batch statistics,
//! bias gradients) accumulate in `f64`.

mod adam;
mod conv;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{ParamEntry, ParamId, ParamStore};
pub use scalar::Real;
pub use tape::{BatchNormMode, BatchStats, Gradients, RunningStats, Tape, Var, BN_EPS};
pub use tensor::Tensor;

pub(crate) use tape::{blend, log_sum_exp};
