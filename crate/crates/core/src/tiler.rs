//! Window-by-window infill of holes larger than the model window.
//!
//! The planner repeatedly takes the top-most, then left-most, missing pixel
//! and places a window with up to `margin` pixels of context above and to
//! the left of it. Every still-missing pixel inside that window is filled by
//! one sampler call, and later windows condition on the result.

use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::grad::Real;
use crate::pccnn::Model;
use crate::raster::{CategoricalRaster, PixelMask};
use crate::rng;
use crate::sampler::{sample, Orientation, SampleRequest};

/// Context rows and columns kept above and left of each step's first
/// missing pixel for a 40-pixel window.
pub const DEFAULT_MARGIN: usize = 27;

/// One sampler call of a plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileStep {
    pub row: usize,
    pub col: usize,
    /// `size × size` mask in window coordinates; missing pixels are the ones
    /// this step fills.
    pub fill: PixelMask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub margin: usize,
    pub steps: Vec<TileStep>,
}

/// Greedy cover of the missing pixels of `mask` by `window × window` steps.
///
/// Near the bottom and right borders the window is moved inwards so it stays
/// the model's size; the context there is larger than `margin`.
pub fn plan(mask: &PixelMask, window: usize, margin: usize) -> Result<TilePlan> {
    let (h, w) = mask.dims();
    if window == 0 || window > h || window > w {
        return Err(Error::invalid(alloc::format!("window {window} does not fit a {h}x{w} raster")));
    }
    if margin >= window {
        return Err(Error::invalid("margin must be smaller than the window"));
    }
    let mut remaining = mask.clone();
    let mut steps = Vec::new();
    while let Some(first) = remaining.observed().iter().position(|&o| !o) {
        let (r, c) = (first / w, first % w);
        let row = r.saturating_sub(margin).min(h - window);
        let col = c.saturating_sub(margin).min(w - window);
        let mut fill = PixelMask::all_observed(window, window);
        for y in 0..window {
            for x in 0..window {
                if !remaining.is_observed(row + y, col + x) {
                    fill.set_observed(y, x, false);
                    remaining.set_observed(row + y, col + x, true);
                }
            }
        }
        steps.push(TileStep { row, col, fill });
    }
    Ok(TilePlan { height: h, width: w, window, margin, steps })
}

/// Seed of completion `index` of a multi-completion tiled run.
pub fn completion_seed(seed: u64, index: usize) -> u64 {
    rng::substream(seed, index as u64).next_u64()
}

/// Executes `plan` once. Observed pixels of `mask` are never changed; each
/// step draws one completion with its own seed and, with `flips`, its own
/// random mirroring.
pub fn run<T: Real>(
    plan: &TilePlan,
    model: &Model<T>,
    raster: &CategoricalRaster,
    mask: &PixelMask,
    temperature: f64,
    seed: u64,
    flips: bool,
) -> Result<CategoricalRaster> {
    if raster.dims() != (plan.height, plan.width) || mask.dims() != raster.dims() {
        return Err(Error::DimensionMismatch { expected: (plan.height, plan.width), actual: raster.dims() });
    }
    if model.config().image_size != plan.window {
        return Err(Error::invalid("plan window differs from the model image size"));
    }
    let mut current = raster.clone();
    let orientation = if flips { Orientation::RandomFlips } else { Orientation::Identity };
    for (s, step) in plan.steps.iter().enumerate() {
        let image = current.window(step.row, step.col, plan.window, plan.window)?;
        let request = SampleRequest {
            image: &image,
            mask: &step.fill,
            temperature,
            seed: completion_seed(seed, s),
            count: 1,
            orientation,
        };
        let done = sample(model, &request)?.remove(0).raster;
        for y in 0..plan.window {
            for x in 0..plan.window {
                if !step.fill.is_observed(y, x) {
                    current.set(step.row + y, step.col + x, done.get(y, x));
                }
            }
        }
    }
    Ok(current)
}

/// Per-pixel fraction of completions whose class is in a class set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

pub fn probability_map(completions: &[CategoricalRaster], classes: &[u8], mask: &PixelMask) -> Result<ProbabilityMap> {
    let first = completions.first().ok_or(Error::Empty("completions"))?;
    let dims = first.dims();
    if mask.dims() != dims {
        return Err(Error::DimensionMismatch { expected: dims, actual: mask.dims() });
    }
    let mut member = [false; 256];
    for &c in classes {
        member[c as usize] = true;
    }
    let mut counts = alloc::vec![0usize; first.len()];
    for c in completions {
        if c.dims() != dims {
            return Err(Error::DimensionMismatch { expected: dims, actual: c.dims() });
        }
        for (n, &v) in counts.iter_mut().zip(c.data()) {
            *n += member[v as usize] as usize;
        }
    }
    let total = completions.len() as f64;
    Ok(ProbabilityMap {
        height: dims.0,
        width: dims.1,
        values: counts.into_iter().map(|n| n as f64 / total).collect(),
    })
}
