use alloc::vec;

use rand::Rng as _;

use super::types::CategoricalRaster;
use crate::error::{Error, Result};
use crate::rng;

/// Knobs for [`synth_landscape`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthParams {
    /// Box-blur radius applied to each class noise field.
    pub smoothing_radius: usize,
    pub smoothing_passes: usize,
    /// Maximum random per-class offset added to the smoothed fields, which
    /// lets a few classes dominate each raster.
    pub dominance: u32,
    /// Probability of stamping one straight 1-pixel road.
    pub road_probability: f64,
    /// Probability of stamping one elliptical water body.
    pub water_probability: f64,
    /// Class used for roads; defaults to 2 (first developed class) when
    /// `K > 2`, else 1.
    pub road_class: Option<u8>,
    pub water_class: u8,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            smoothing_radius: 2,
            smoothing_passes: 2,
            dominance: 1000,
            road_probability: 0.5,
            water_probability: 0.3,
            road_class: None,
            water_class: 0,
        }
    }
}

/// Generates a spatially cohesive raster with `k` classes.
///
/// Each class gets an integer noise field which is box-blurred; every pixel
/// takes the class whose field is largest there. Roads and water bodies are
/// stamped afterwards from their own random substreams, so toggling them
/// never changes the underlying field. The whole path is integer arithmetic
/// and therefore reproducible across platforms.
pub fn synth_landscape(
    height: usize,
    width: usize,
    k: usize,
    seed: u64,
    params: &SynthParams,
) -> Result<CategoricalRaster> {
    if !(2..=256).contains(&k) {
        return Err(Error::invalid("synthetic landscapes need 2..=256 classes"));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("raster dimensions must be positive"));
    }
    if (params.water_class as usize) >= k {
        return Err(Error::ClassOutOfRange { value: params.water_class, num_classes: k });
    }
    let road_class = params.road_class.unwrap_or(if k > 2 { 2 } else { 1 });
    if road_class as usize >= k {
        return Err(Error::ClassOutOfRange { value: road_class, num_classes: k });
    }
    for p in [params.road_probability, params.water_probability] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("stamp probabilities must lie in [0, 1]"));
        }
    }

    let n = height * width;
    let mut field_rng = rng::substream(seed, 0);
    let mut best = vec![0u32; n];
    let mut data = vec![0u8; n];
    let mut field = vec![0u32; n];
    let mut scratch = vec![0u32; n];
    for class in 0..k {
        let offset = if params.dominance > 0 {
            field_rng.random_range(0..=params.dominance)
        } else {
            0
        };
        for v in field.iter_mut() {
            *v = field_rng.random_range(0..=u16::MAX as u32);
        }
        for _ in 0..params.smoothing_passes {
            box_blur(&mut field, &mut scratch, height, width, params.smoothing_radius);
        }
        for i in 0..n {
            let v = field[i] + offset;
            if class == 0 || v > best[i] {
                best[i] = v;
                data[i] = class as u8;
            }
        }
    }

    let mut road_rng = rng::substream(seed, 1);
    if road_rng.random_bool(params.road_probability) {
        let (a, b) = if road_rng.random_bool(0.5) {
            // top edge to bottom edge
            (
                (0, road_rng.random_range(0..width)),
                (height - 1, road_rng.random_range(0..width)),
            )
        } else {
            (
                (road_rng.random_range(0..height), 0),
                (road_rng.random_range(0..height), width - 1),
            )
        };
        draw_line(&mut data, width, a, b, road_class);
    }

    let mut water_rng = rng::substream(seed, 2);
    if water_rng.random_bool(params.water_probability) {
        let max_axis = (height.min(width) / 5).max(1) as i64;
        let cy = water_rng.random_range(0..height) as i64;
        let cx = water_rng.random_range(0..width) as i64;
        let ay = water_rng.random_range(1..=max_axis);
        let ax = water_rng.random_range(1..=max_axis);
        for r in 0..height as i64 {
            for c in 0..width as i64 {
                let (dy, dx) = (r - cy, c - cx);
                if dy * dy * ax * ax + dx * dx * ay * ay <= ax * ax * ay * ay {
                    data[r as usize * width + c as usize] = params.water_class;
                }
            }
        }
    }

    CategoricalRaster::new(height, width, k, data)
}

// Separable mean filter over the in-bounds part of a (2r+1)² box.
fn box_blur(field: &mut [u32], scratch: &mut [u32], height: usize, width: usize, radius: usize) {
    if radius == 0 {
        return;
    }
    for r in 0..height {
        for c in 0..width {
            let (lo, hi) = (c.saturating_sub(radius), (c + radius).min(width - 1));
            let sum: u64 = field[r * width + lo..=r * width + hi].iter().map(|&v| v as u64).sum();
            scratch[r * width + c] = (sum / (hi - lo + 1) as u64) as u32;
        }
    }
    for c in 0..width {
        for r in 0..height {
            let (lo, hi) = (r.saturating_sub(radius), (r + radius).min(height - 1));
            let sum: u64 = (lo..=hi).map(|rr| scratch[rr * width + c] as u64).sum();
            field[r * width + c] = (sum / (hi - lo + 1) as u64) as u32;
        }
    }
}

// Bresenham line between two in-bounds cells.
fn draw_line(data: &mut [u8], width: usize, a: (usize, usize), b: (usize, usize), class: u8) {
    let (mut y, mut x) = (a.0 as i64, a.1 as i64);
    let (y1, x1) = (b.0 as i64, b.1 as i64);
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        data[y as usize * width + x as usize] = class;
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landstat::adjacency;
    use alloc::vec::Vec;
    use rand::seq::SliceRandom;

    #[test]
    fn same_seed_same_raster() {
        let p = SynthParams::default();
        let a = synth_landscape(40, 40, 5, 11, &p).unwrap();
        let b = synth_landscape(40, 40, 5, 11, &p).unwrap();
        assert_eq!(a, b);
        let c = synth_landscape(40, 40, 5, 12, &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stamps_only_touch_their_own_class() {
        let base = SynthParams {
            road_probability: 0.0,
            water_probability: 0.0,
            ..SynthParams::default()
        };
        let roads = SynthParams {
            road_probability: 1.0,
            road_class: Some(3),
            ..base.clone()
        };
        for seed in 0..20 {
            let plain = synth_landscape(24, 24, 5, seed, &base).unwrap();
            let with_road = synth_landscape(24, 24, 5, seed, &roads).unwrap();
            let changed: Vec<usize> = (0..plain.len())
                .filter(|&i| plain.data()[i] != with_road.data()[i])
                .collect();
            assert!(changed.iter().all(|&i| with_road.data()[i] == 3));
            // A 1-pixel line crossing the raster touches at most one cell per
            // row or column along its major axis.
            let road_cells = (0..plain.len())
                .filter(|&i| with_road.data()[i] == 3 && plain.data()[i] != 3)
                .count();
            assert!(road_cells <= 24);
        }
    }

    #[test]
    fn adjacency_beats_permutation_null() {
        let p = SynthParams::default();
        let mut wins = 0;
        for seed in 0..100 {
            let r = synth_landscape(40, 40, 5, seed, &p).unwrap();
            let observed = adjacency(&r) as f64;
            let mut rng = rng::seeded(10_000 + seed);
            let mut data = r.data().to_vec();
            let mut null = 0.0;
            for _ in 0..100 {
                data.shuffle(&mut rng);
                let shuffled = CategoricalRaster::new(40, 40, 5, data.clone()).unwrap();
                null += adjacency(&shuffled) as f64;
            }
            if observed > null / 100.0 {
                wins += 1;
            }
        }
        assert!(wins >= 95, "only {wins}/100 seeds beat the permutation null");
    }

    #[test]
    fn validates_arguments() {
        let p = SynthParams::default();
        assert!(synth_landscape(4, 4, 1, 0, &p).is_err());
        let bad = SynthParams { water_class: 7, ..p };
        assert!(synth_landscape(4, 4, 5, 0, &bad).is_err());
    }
}
