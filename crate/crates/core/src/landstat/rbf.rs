use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;

const JITTER: f64 = 1e-8;

/// Regular evaluation grid: `nx` × `ny` points starting at (`x0`, `y0`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

/// A fitted Gaussian radial basis interpolant.
#[derive(Debug, Clone)]
pub struct RbfSurface {
    centers: Vec<(f64, f64)>,
    weights: Vec<f64>,
    length_scale: f64,
}

impl RbfSurface {
    /// Fits exact interpolation weights for `points` given as (x, y, value).
    pub fn fit(points: &[(f64, f64, f64)], length_scale: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("interpolation points"));
        }
        if !(length_scale > 0.0) {
            return Err(Error::invalid("length scale must be positive"));
        }
        let n = points.len();
        for i in 0..n {
            for j in 0..i {
                if points[i].0 == points[j].0 && points[i].1 == points[j].1 {
                    return Err(Error::Singular(alloc::format!("points {j} and {i} coincide")));
                }
            }
        }
        let centers: Vec<(f64, f64)> = points.iter().map(|p| (p.0, p.1)).collect();
        let mut gram = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = kernel(centers[i], centers[j], length_scale);
            }
            gram[i * n + i] += JITTER;
        }
        let l = linalg::cholesky(&gram, n)?;
        let values: Vec<f64> = points.iter().map(|p| p.2).collect();
        let weights = linalg::cholesky_solve(&l, n, &values);
        Ok(Self { centers, weights, length_scale })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| w * kernel(c, (x, y), self.length_scale))
            .sum()
    }
}

fn kernel(a: (f64, f64), b: (f64, f64), length_scale: f64) -> f64 {
    let d2 = (a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1);
    libm::exp(-d2 / (2.0 * length_scale * length_scale))
}

/// Interpolates scattered values onto `grid`; row-major, `ny` rows of `nx`.
pub fn rbf_interpolate(points: &[(f64, f64, f64)], grid: &GridSpec, length_scale: f64) -> Result<Vec<f64>> {
    let surface = RbfSurface::fit(points, length_scale)?;
    let mut out = Vec::with_capacity(grid.nx * grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            out.push(surface.eval(grid.x0 + i as f64 * grid.dx, grid.y0 + j as f64 * grid.dy));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_peaks_at_its_location() {
        let s = RbfSurface::fit(&[(1.0, 2.0, 3.5)], 1.0).unwrap();
        assert!((s.eval(1.0, 2.0) - 3.5).abs() < 1e-6);
        assert!(s.eval(2.0, 2.0) < s.eval(1.5, 2.0));
        assert!(s.eval(10.0, 2.0).abs() < 1e-9);
    }

    #[test]
    fn reproduces_data() {
        let pts: Vec<_> = (0..12)
            .map(|i| {
                let x = libm::cos(i as f64 * 1.7) * 5.0;
                let y = libm::sin(i as f64 * 0.9) * 4.0;
                (x, y, libm::sin(x) + 0.3 * y)
            })
            .collect();
        let s = RbfSurface::fit(&pts, 1.5).unwrap();
        for p in &pts {
            assert!((s.eval(p.0, p.1) - p.2).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_pair_is_zero_at_midpoint() {
        let grid = GridSpec { x0: -1.0, y0: 0.0, dx: 1.0, dy: 1.0, nx: 3, ny: 1 };
        let out = rbf_interpolate(&[(-1.0, 0.0, 1.0), (1.0, 0.0, -1.0)], &grid, 0.8).unwrap();
        assert!(out[1].abs() < 1e-9);
        assert!((out[0] - 1.0).abs() < 1e-6 && (out[2] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn duplicate_points_are_singular() {
        let err = RbfSurface::fit(&[(0.0, 0.0, 1.0), (0.0, 0.0, 2.0)], 1.0).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }
}
