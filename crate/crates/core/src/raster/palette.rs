use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Index of open water in the default legend.
pub const OPEN_WATER: u8 = 0;

/// The four developed classes of the default legend (open space, low,
/// medium and high intensity).
pub const DEVELOPED_CLASSES: [u8; 4] = [2, 3, 4, 5];

const NLCD: [(&str, [u8; 3]); 20] = [
    ("open_water", [70, 107, 159]),
    ("ice_snow", [209, 222, 248]),
    ("developed_open", [222, 197, 197]),
    ("developed_low", [217, 146, 130]),
    ("developed_medium", [235, 0, 0]),
    ("developed_high", [171, 0, 0]),
    ("barren", [179, 172, 159]),
    ("deciduous_forest", [104, 171, 95]),
    ("evergreen_forest", [28, 95, 44]),
    ("mixed_forest", [181, 197, 143]),
    ("dwarf_scrub", [172, 146, 57]),
    ("shrub_scrub", [204, 184, 121]),
    ("grassland", [223, 223, 194]),
    ("sedge", [209, 209, 130]),
    ("lichens", [164, 204, 81]),
    ("moss", [130, 186, 158]),
    ("pasture_hay", [220, 217, 57]),
    ("cultivated_crops", [171, 108, 40]),
    ("woody_wetlands", [184, 217, 235]),
    ("herbaceous_wetlands", [108, 159, 184]),
];

/// Class names and display colors.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClassPalette {
    labels: Vec<String>,
    colors: Vec<[u8; 3]>,
}

impl ClassPalette {
    pub fn new(labels: Vec<String>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::invalid("palette needs at least 2 classes"));
        }
        if labels.len() > 256 {
            return Err(Error::invalid("palette supports at most 256 classes"));
        }
        if colors.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels but {} colors",
                labels.len(),
                colors.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::invalid(format!("duplicate label {a:?}")));
            }
        }
        Ok(Self { labels, colors })
    }

    /// The 20-class land cover legend in standard order.
    pub fn nlcd() -> Self {
        Self {
            labels: NLCD.iter().map(|(l, _)| String::from(*l)).collect(),
            colors: NLCD.iter().map(|(_, c)| *c).collect(),
        }
    }

    /// `k` classes with evenly spaced hues; `nlcd()` when `k == 20`.
    pub fn generic(k: usize) -> Result<Self> {
        if k == NLCD.len() {
            return Ok(Self::nlcd());
        }
        let labels = (0..k).map(|i| format!("class_{i}")).collect();
        let colors = (0..k).map(|i| hue_to_rgb(i * 1536 / k.max(1))).collect();
        Self::new(labels, colors)
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn color(&self, class: u8) -> [u8; 3] {
        self.colors[class as usize]
    }
}

// Integer hue wheel with 1536 steps.
fn hue_to_rgb(h: usize) -> [u8; 3] {
    let h = h % 1536;
    let x = (h % 256) as u8;
    let (r, g, b) = match h / 256 {
        0 => (255, x, 0),
        1 => (255 - x, 255, 0),
        2 => (0, 255, x),
        3 => (0, 255 - x, 255),
        4 => (x, 0, 255),
        _ => (255, 0, 255 - x),
    };
    // Darken slightly so light classes stay visible on white.
    [r / 5 * 4, g / 5 * 4, b / 5 * 4]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nlcd_has_twenty_classes_with_developed_at_two_to_five() {
        let p = ClassPalette::nlcd();
        assert_eq!(p.num_classes(), 20);
        for c in DEVELOPED_CLASSES {
            assert!(p.labels()[c as usize].starts_with("developed"));
        }
        assert_eq!(p.labels()[OPEN_WATER as usize], "open_water");
    }

    #[test]
    fn rejects_bad_palettes() {
        let l = |v: &[&str]| v.iter().map(|s| String::from(*s)).collect::<Vec<_>>();
        assert!(ClassPalette::new(l(&["a"]), alloc::vec![[0; 3]]).is_err());
        assert!(ClassPalette::new(l(&["a", "a"]), alloc::vec![[0; 3]; 2]).is_err());
        assert!(ClassPalette::new(l(&["a", "b"]), alloc::vec![[0; 3]; 3]).is_err());
        assert!(ClassPalette::new(l(&["a", "b"]), alloc::vec![[0; 3]; 2]).is_ok());
    }

    #[test]
    fn generic_colors_are_distinct() {
        let p = ClassPalette::generic(7).unwrap();
        for i in 0..7 {
            for j in 0..i {
                assert_ne!(p.colors()[i], p.colors()[j]);
            }
        }
    }
}
