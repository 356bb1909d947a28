//! Autoregressive modeling of categorical rasters.
//!
//! `lulc-core` holds every algorithm behind the `lulc` tool and nothing that
//! touches the operating system: it builds with `#![no_std]` and only needs an
//! allocator. File formats, threads and the command line live in the `lulc`
//! crate.
//!
//! The pieces, bottom-up:
//!
//! - [`raster`]: categorical rasters, masks, palettes, coarsening, window
//!   extraction and a synthetic landscape generator.
//! - [`grad`]: a small dense tensor type with a reverse-mode tape, masked
//!   convolutions, batch normalization, gated activations and Adam.
//! - [`pccnn`]: the pixel-constrained network, a gated autoregressive stack
//!   plus an auxiliary residual network whose logits are summed.
//! - [`sampler`]: ancestral sampling, inpainting, temperature and scoring.
//! - [`tiler`]: sequential window-by-window infill of large holes.
//! - [`landstat`]: landscape statistics, interval coverage and RBF surfaces.
//! - [`sccar`]: the spatial categorical CAR benchmark with HMC inference.
#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod grad;
pub mod landstat;
pub mod linalg;
pub mod pccnn;
pub mod raster;
pub mod rng;
pub mod sampler;
pub mod sccar;
pub mod tiler;

pub use error::{Error, Result};
pub use raster::{CategoricalRaster, ClassPalette, PixelMask};
