//! Categorical rasters and everything needed to turn a land cover map into
//! training windows.

mod palette;
mod preprocess;
mod synth;
mod types;

pub use palette::{ClassPalette, DEVELOPED_CLASSES, OPEN_WATER};
pub use preprocess::{coarsen_majority, extract_windows, DatasetManifest, WindowEntry, WindowSpec};
pub use synth::{synth_landscape, SynthParams};
pub use types::{CategoricalRaster, MaskFamily, PixelMask};
