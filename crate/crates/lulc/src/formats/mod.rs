//! Binary and text file formats. All integers and floats are little-endian.

mod bytes;
mod checkpoint;
mod draws;
mod ppm;
mod raster;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
pub use draws::{decode_draws, encode_draws, DrawTable};
pub use ppm::{export_ppm, heatmap_ppm, normalize};
pub use raster::{decode_cmsk, decode_cras, encode_cmsk, encode_cras, HEADER_LEN, MASK_MAGIC, RASTER_MAGIC};
