//! The pixel-constrained network and its training loop.

mod config;
mod masks;
mod model;
mod train;

pub use config::{count_params, ModelConfig, ParamCounts};
pub use masks::{horizontal_mask, vertical_mask, MaskType};
pub use model::{Mode, Model, Nll, NormUpdates};
pub use train::{evaluate, train, Control, EpochRecord, Split, TrainConfig, Trainer};

pub(crate) use model::top_rows;

#[cfg(test)]
mod tests;
