//! The spatial categorical CAR benchmark.
//!
//! Each class `k` has a latent field `ω_·k` over the pixels with a CAR prior
//! of precision `τ_k (D − ρ_k Q)`, `Q` the 4-adjacency of the grid and `D`
//! its degree matrix. Logits are `U = Ω A` with `A` a correlation matrix,
//! and observed pixels are categorical draws from `softmax(U_i·)`. Inference
//! is HMC on an unconstrained reparameterization in which the latent fields
//! are scaled by `√τ_k`.

mod density;
pub mod diagnostics;
mod fit;
pub mod hmc;
mod params;
mod structure;

pub use density::{log_posterior, SccarTarget};
pub use diagnostics::{ess, rhat};
pub use fit::{
    fit_chain, hmc_fit, predictive_inpaint, simulate, unconstrain, ChainStats, ParamSummary, SccarFit,
    SccarSampler,
};
pub use hmc::{HmcConfig, Target};
pub use params::{scalar_names, Layout, SccarParams, UnconstrainedState, RHO_EPSILON};
pub use structure::CarStructure;

#[cfg(test)]
mod tests;
