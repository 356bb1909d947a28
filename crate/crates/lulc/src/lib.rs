//! File formats, multithreaded drivers and the command line around
//! [`lulc_core`].

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod formats;
pub mod fsio;
pub mod parallel;

pub use error::{Error, FormatError, Result};
pub use lulc_core as core;
