use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::palette::OPEN_WATER;
use super::types::CategoricalRaster;
use crate::error::{Axis, Error, Result};
use crate::rng;

/// Downsamples by `factor`, replacing each factor×factor block with its most
/// frequent class. Ties go to the lowest class index.
pub fn coarsen_majority(raster: &CategoricalRaster, factor: usize) -> Result<CategoricalRaster> {
    if factor == 0 {
        return Err(Error::invalid("coarsening factor must be positive"));
    }
    let (h, w) = raster.dims();
    if h % factor != 0 {
        return Err(Error::NotDivisible { axis: Axis::Rows, len: h, factor });
    }
    if w % factor != 0 {
        return Err(Error::NotDivisible { axis: Axis::Cols, len: w, factor });
    }
    let (oh, ow) = (h / factor, w / factor);
    let mut counts = vec![0u32; raster.num_classes()];
    let mut out = Vec::with_capacity(oh * ow);
    for br in 0..oh {
        for bc in 0..ow {
            counts.iter_mut().for_each(|c| *c = 0);
            for r in br * factor..(br + 1) * factor {
                for c in bc * factor..(bc + 1) * factor {
                    counts[raster.get(r, c) as usize] += 1;
                }
            }
            // max_by_key keeps the last maximum; scan manually for the first.
            let mut best = 0;
            for (k, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = k;
                }
            }
            out.push(best as u8);
        }
    }
    CategoricalRaster::new(oh, ow, raster.num_classes(), out)
}

/// Options for [`extract_windows`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WindowSpec {
    pub window: usize,
    pub count: usize,
    pub water_class: u8,
    pub water_fraction_limit: f64,
    pub max_consecutive_rejections: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window: 40,
            count: 1,
            water_class: OPEN_WATER,
            water_fraction_limit: 0.5,
            max_consecutive_rejections: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowEntry {
    pub source_id: usize,
    pub row_offset: usize,
    pub col_offset: usize,
}

/// Provenance of an extracted window set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub window_size: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub entries: Vec<WindowEntry>,
    pub water_class: u8,
    pub water_fraction_limit: f64,
}

/// Samples `spec.count` windows uniformly over all valid (source, offset)
/// positions, rejecting windows whose water fraction exceeds the limit.
///
/// Each source contributes in proportion to its number of valid offsets.
pub fn extract_windows(
    sources: &[&CategoricalRaster],
    spec: &WindowSpec,
    seed: u64,
) -> Result<(DatasetManifest, Vec<CategoricalRaster>)> {
    let first = sources.first().ok_or(Error::Empty("window sources"))?;
    let k = first.num_classes();
    if spec.count == 0 || spec.window == 0 {
        return Err(Error::invalid("window size and count must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.water_fraction_limit) {
        return Err(Error::invalid("water fraction limit must lie in [0, 1]"));
    }
    let mut offsets = Vec::with_capacity(sources.len());
    for s in sources {
        if s.num_classes() != k {
            return Err(Error::invalid("all sources must share the class count"));
        }
        if spec.window > s.height().min(s.width()) {
            return Err(Error::invalid("window larger than source raster"));
        }
        let (rows, cols) = (s.height() - spec.window + 1, s.width() - spec.window + 1);
        offsets.push((rows, cols));
    }
    let total: u64 = offsets.iter().map(|&(r, c)| (r * c) as u64).sum();
    let area = (spec.window * spec.window) as f64;
    let mut rng = rng::seeded(seed);
    let mut entries = Vec::with_capacity(spec.count);
    let mut windows = Vec::with_capacity(spec.count);
    let mut rejections = 0;
    while windows.len() < spec.count {
        let mut pick = rng.random_range(0..total);
        let mut source_id = 0;
        for (i, &(r, c)) in offsets.iter().enumerate() {
            let n = (r * c) as u64;
            if pick < n {
                source_id = i;
                break;
            }
            pick -= n;
        }
        let cols = offsets[source_id].1 as u64;
        let (row_offset, col_offset) = ((pick / cols) as usize, (pick % cols) as usize);
        let win = sources[source_id].window(row_offset, col_offset, spec.window, spec.window)?;
        let water = win.data().iter().filter(|&&v| v == spec.water_class).count();
        if water as f64 / area > spec.water_fraction_limit {
            rejections += 1;
            if rejections >= spec.max_consecutive_rejections {
                return Err(Error::Infeasible { rejections });
            }
            continue;
        }
        rejections = 0;
        entries.push(WindowEntry {
            source_id,
            row_offset,
            col_offset,
        });
        windows.push(win);
    }
    let manifest = DatasetManifest {
        window_size: spec.window,
        k,
        entries,
        water_class: spec.water_class,
        water_fraction_limit: spec.water_fraction_limit,
    };
    Ok((manifest, windows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(h: usize, w: usize, k: usize, data: &[u8]) -> CategoricalRaster {
        CategoricalRaster::new(h, w, k, data.to_vec()).unwrap()
    }

    #[test]
    fn majority_of_block() {
        let r = raster(3, 3, 8, &[2, 2, 2, 2, 2, 7, 7, 7, 7]);
        assert_eq!(coarsen_majority(&r, 3).unwrap().data(), &[2]);
        let r = raster(2, 2, 6, &[5; 4]);
        let out = coarsen_majority(&r, 2).unwrap();
        assert_eq!((out.dims(), out.data()), ((1, 1), &[5u8][..]));
    }

    #[test]
    fn majority_tie_goes_to_lowest_index() {
        // counts: class 1 ×4, class 2 ×4, class 3 ×1
        let r = raster(3, 3, 4, &[2, 1, 2, 1, 3, 1, 2, 1, 2]);
        assert_eq!(coarsen_majority(&r, 3).unwrap().data(), &[1]);
    }

    #[test]
    fn not_divisible_names_axis() {
        let r = raster(4, 6, 2, &[0; 24]);
        assert!(matches!(
            coarsen_majority(&r, 4),
            Err(Error::NotDivisible { axis: Axis::Cols, .. })
        ));
        let r = raster(5, 6, 2, &[0; 30]);
        assert!(matches!(
            coarsen_majority(&r, 3),
            Err(Error::NotDivisible { axis: Axis::Rows, .. })
        ));
    }

    #[test]
    fn windows_are_in_bounds_and_counted() {
        let src = raster(80, 80, 3, &vec![1u8; 6400]);
        let spec = WindowSpec {
            window: 40,
            count: 50,
            ..WindowSpec::default()
        };
        let (m, w) = extract_windows(&[&src], &spec, 3).unwrap();
        assert_eq!(w.len(), 50);
        assert_eq!(m.entries.len(), 50);
        for e in &m.entries {
            assert!(e.row_offset <= 40 && e.col_offset <= 40);
        }
        let (m2, _) = extract_windows(&[&src], &spec, 3).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn all_water_is_infeasible() {
        let src = raster(10, 10, 3, &[0u8; 100]);
        let spec = WindowSpec {
            window: 4,
            count: 1,
            max_consecutive_rejections: 500,
            ..WindowSpec::default()
        };
        assert!(matches!(
            extract_windows(&[&src], &spec, 0),
            Err(Error::Infeasible { rejections: 500 })
        ));
    }

    #[test]
    fn window_over_water_limit_is_rejected() {
        // Left 6 columns water, right 4 land: the only 10x10 window is 60% water.
        let mut data = vec![1u8; 100];
        for r in 0..10 {
            for c in 0..6 {
                data[r * 10 + c] = 0;
            }
        }
        let src = raster(10, 10, 2, &data);
        let spec = WindowSpec {
            window: 10,
            count: 1,
            max_consecutive_rejections: 20,
            ..WindowSpec::default()
        };
        assert!(extract_windows(&[&src], &spec, 0).is_err());
        let spec = WindowSpec {
            water_fraction_limit: 0.6,
            ..spec
        };
        assert!(extract_windows(&[&src], &spec, 0).is_ok());
    }
}
