//! Binary `P6` images.

use lulc_core::{CategoricalRaster, ClassPalette, Error as CoreError};

use crate::error::Result;

fn p6(height: usize, width: usize, pixels: impl Iterator<Item = [u8; 3]>) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    pixels.for_each(|c| out.extend_from_slice(&c));
    out
}

/// One palette color per cell.
pub fn export_ppm(raster: &CategoricalRaster, palette: &ClassPalette) -> Result<Vec<u8>> {
    if palette.num_classes() != raster.num_classes() {
        return Err(CoreError::PaletteMismatch { palette: palette.num_classes(), raster: raster.num_classes() }.into());
    }
    let (h, w) = raster.dims();
    Ok(p6(h, w, raster.data().iter().map(|&c| palette.color(c))))
}

/// Values in `[0, 1]` on a white-to-dark-red ramp; NaN cells are grey.
pub fn heatmap_ppm(values: &[f64], height: usize, width: usize) -> Vec<u8> {
    debug_assert_eq!(values.len(), height * width);
    p6(
        height,
        width,
        values.iter().map(|&v| {
            if v.is_nan() {
                return [128, 128, 128];
            }
            let t = v.clamp(0.0, 1.0);
            let g = (255.0 * (1.0 - t)).round() as u8;
            [(255.0 - 115.0 * t * t).round() as u8, g, g]
        }),
    )
}

/// Min-max scaling to `[0, 1]` for [`heatmap_ppm`].
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    values.iter().map(|&v| if span > 0.0 { (v - lo) / span } else { 0.5 }).collect()
}
