//! Kernel masks for the two-stack gated network.
//!
//! Both stacks keep the invariant that the feature at (y, x) only depends on
//! pixels before (y, x) in raster order:
//!
//! - the vertical stack uses full k×k kernels restricted to rows strictly
//!   above the center (first block) or at/above the center (later blocks,
//!   whose inputs already only see earlier rows);
//! - the horizontal stack uses 1×k kernels restricted to columns strictly
//!   left of the center (first block) or up to the center (later blocks).
//!
//! The vertical stack feeds the horizontal one, which covers the region
//! up-and-right of a pixel and so removes the blind spot of a single masked
//! stack.

use super::super::grad::{Real, Tensor};

/// First block (`A`) excludes the current pixel, later blocks (`B`) may use
/// features computed at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskType {
    A,
    B,
}

/// Mask for a `[out, cin, k, k]` vertical-stack kernel.
pub fn vertical_mask<T: Real>(out: usize, cin: usize, k: usize, kind: MaskType) -> Tensor<T> {
    let center = k / 2;
    Tensor::from_fn(&[out, cin, k, k], |j| {
        let row = (j / k) % k;
        let keep = match kind {
            MaskType::A => row < center,
            MaskType::B => row <= center,
        };
        if keep { T::one() } else { T::zero() }
    })
}

/// Mask for a `[out, cin, 1, k]` horizontal-stack kernel.
pub fn horizontal_mask<T: Real>(out: usize, cin: usize, k: usize, kind: MaskType) -> Tensor<T> {
    let center = k / 2;
    Tensor::from_fn(&[out, cin, 1, k], |j| {
        let col = j % k;
        let keep = match kind {
            MaskType::A => col < center,
            MaskType::B => col <= center,
        };
        if keep { T::one() } else { T::zero() }
    })
}
