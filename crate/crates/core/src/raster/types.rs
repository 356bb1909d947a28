use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// An H×W grid of class indices, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CategoricalRaster {
    height: usize,
    width: usize,
    num_classes: usize,
    data: Vec<u8>,
}

impl CategoricalRaster {
    pub fn new(height: usize, width: usize, num_classes: usize, data: Vec<u8>) -> Result<Self> {
        if !(2..=256).contains(&num_classes) {
            return Err(Error::invalid("number of classes must be in 2..=256"));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid("raster dimensions must be positive"));
        }
        if data.len() != height * width {
            return Err(Error::shape(
                "raster",
                alloc::format!("{}x{} raster with {} values", height, width, data.len()),
            ));
        }
        if let Some(&value) = data.iter().find(|&&v| v as usize >= num_classes) {
            return Err(Error::ClassOutOfRange { value, num_classes });
        }
        Ok(Self {
            height,
            width,
            num_classes,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, num_classes: usize, class: u8) -> Result<Self> {
        Self::new(height, width, num_classes, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    /// Sets one cell. Panics if `class` is out of range.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, class: u8) {
        assert!((class as usize) < self.num_classes, "class out of range");
        self.data[row * self.width + col] = class;
    }

    /// Histogram of class counts, length `num_classes`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &v in &self.data {
            counts[v as usize] += 1;
        }
        counts
    }

    /// Copies the `height`×`width` sub-raster whose top-left corner is
    /// (`row`, `col`).
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::invalid("window exceeds raster bounds"));
        }
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Self::new(height, width, self.num_classes, data)
    }

    pub fn flipped(&self, horizontal: bool, vertical: bool) -> Self {
        let mut out = self.clone();
        out.data = flip(&self.data, self.height, self.width, horizontal, vertical);
        out
    }
}

/// Which pixels of a raster are known.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PixelMask {
    height: usize,
    width: usize,
    observed: Vec<bool>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != height * width {
            return Err(Error::shape(
                "mask",
                alloc::format!("{}x{} mask with {} values", height, width, observed.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            observed,
        })
    }

    pub fn all_observed(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            observed: vec![true; height * width],
        }
    }

    pub fn all_missing(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            observed: vec![false; height * width],
        }
    }

    /// Everything observed except the given rectangle.
    pub fn with_missing_rect(
        height: usize,
        width: usize,
        row: usize,
        col: usize,
        rect_h: usize,
        rect_w: usize,
    ) -> Self {
        let mut mask = Self::all_observed(height, width);
        for r in row..(row + rect_h).min(height) {
            for c in col..(col + rect_w).min(width) {
                mask.observed[r * width + c] = false;
            }
        }
        mask
    }

    pub fn from_family(family: MaskFamily, height: usize, width: usize) -> Self {
        match family {
            MaskFamily::TopMissing => Self::with_missing_rect(height, width, 0, 0, height / 2, width),
            MaskFamily::BottomMissing => {
                Self::with_missing_rect(height, width, height / 2, 0, height - height / 2, width)
            }
            MaskFamily::CenterMissing => Self::with_missing_rect(
                height,
                width,
                height / 4,
                width / 4,
                height - 2 * (height / 4),
                width - 2 * (width / 4),
            ),
            MaskFamily::AllMissing => Self::all_missing(height, width),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    #[inline]
    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[row * self.width + col]
    }

    #[inline]
    pub fn set_observed(&mut self, row: usize, col: usize, observed: bool) {
        self.observed[row * self.width + col] = observed;
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::invalid("window exceeds mask bounds"));
        }
        let mut observed = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            observed.extend_from_slice(&self.observed[start..start + width]);
        }
        Self::new(height, width, observed)
    }

    pub fn flipped(&self, horizontal: bool, vertical: bool) -> Self {
        Self {
            height: self.height,
            width: self.width,
            observed: flip(&self.observed, self.height, self.width, horizontal, vertical),
        }
    }

    pub(crate) fn check_matches(&self, raster: &CategoricalRaster) -> Result<()> {
        if self.dims() != raster.dims() {
            return Err(Error::DimensionMismatch {
                expected: raster.dims(),
                actual: self.dims(),
            });
        }
        Ok(())
    }
}

/// The missing-region shapes used when training and evaluating inpainting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskFamily {
    /// Top half missing, bottom half observed.
    TopMissing,
    BottomMissing,
    /// Central rectangle of half the height and width missing.
    CenterMissing,
    AllMissing,
}

impl MaskFamily {
    pub const ALL: [MaskFamily; 4] = [
        MaskFamily::TopMissing,
        MaskFamily::BottomMissing,
        MaskFamily::CenterMissing,
        MaskFamily::AllMissing,
    ];
}

fn flip<T: Copy>(data: &[T], height: usize, width: usize, horizontal: bool, vertical: bool) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for r in 0..height {
        let sr = if vertical { height - 1 - r } else { r };
        for c in 0..width {
            let sc = if horizontal { width - 1 - c } else { c };
            out.push(data[sr * width + sc]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        let err = CategoricalRaster::new(1, 2, 3, vec![0, 3]).unwrap_err();
        assert_eq!(err, Error::ClassOutOfRange { value: 3, num_classes: 3 });
        assert!(CategoricalRaster::new(2, 2, 3, vec![0; 3]).is_err());
    }

    #[test]
    fn window_copies_rows() {
        let r = CategoricalRaster::new(3, 3, 9, (0..9).collect()).unwrap();
        let w = r.window(1, 1, 2, 2).unwrap();
        assert_eq!(w.data(), &[4, 5, 7, 8]);
        assert!(r.window(2, 2, 2, 2).is_err());
    }

    #[test]
    fn flips_are_involutions() {
        let r = CategoricalRaster::new(2, 3, 6, (0..6).collect()).unwrap();
        assert_eq!(r.flipped(true, false).data(), &[2, 1, 0, 5, 4, 3]);
        assert_eq!(r.flipped(false, true).data(), &[3, 4, 5, 0, 1, 2]);
        assert_eq!(r.flipped(true, true).flipped(true, true), r);
    }

    #[test]
    fn mask_families_cover_expected_regions() {
        let top = PixelMask::from_family(MaskFamily::TopMissing, 4, 4);
        assert_eq!(top.missing_count(), 8);
        assert!(!top.is_observed(1, 3) && top.is_observed(2, 0));
        let center = PixelMask::from_family(MaskFamily::CenterMissing, 8, 8);
        assert_eq!(center.missing_count(), 16);
        assert!(!center.is_observed(2, 2) && center.is_observed(1, 1));
        assert_eq!(PixelMask::from_family(MaskFamily::AllMissing, 3, 5).missing_count(), 15);
    }
}
