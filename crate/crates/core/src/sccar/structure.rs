use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;

/// 4-adjacency of an `height × width` grid, pixels in raster order.
///
/// `Q` is never stored: neighbours are enumerated from the grid. The
/// spectrum of `D^{-1/2} Q D^{-1/2}` is computed once, which makes
/// `log |τ (D − ρ Q)|` an O(N) sum for any `τ, ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarStructure {
    height: usize,
    width: usize,
    degree: Vec<f64>,
    log_det_degree: f64,
    /// Eigenvalues of `D^{-1/2} Q D^{-1/2}`, all in `[-1, 1]`.
    spectrum: Vec<f64>,
}

impl CarStructure {
    pub fn grid(height: usize, width: usize) -> Result<Self> {
        let n = height * width;
        if n < 2 {
            return Err(Error::invalid("a CAR grid needs at least two pixels"));
        }
        let mut s = Self { height, width, degree: Vec::new(), log_det_degree: 0.0, spectrum: Vec::new() };
        s.degree = (0..n).map(|i| s.neighbors(i).count() as f64).collect();
        s.log_det_degree = s.degree.iter().map(|&d| libm::log(d)).sum();
        let mut m = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in s.neighbors(i) {
                m[i * n + j] = 1.0 / libm::sqrt(s.degree[i] * s.degree[j]);
            }
        }
        s.spectrum = linalg::symmetric_eigenvalues(&m, n)?;
        Ok(s)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of pixels `N`.
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// Diagonal of `D`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// 4-neighbours of pixel `i` (up, left, right, down).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (w, h) = (self.width, self.height);
        let (y, x) = (i / w, i % w);
        [
            (y > 0).then(|| i - w),
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
            (y + 1 < h).then(|| i + w),
        ]
        .into_iter()
        .flatten()
    }

    /// `(Q v)_i`.
    pub fn neighbor_sum(&self, v: &[f64], i: usize) -> f64 {
        self.neighbors(i).map(|j| v[j]).sum()
    }

    /// `vᵀ D v` and `vᵀ Q v`.
    pub fn quadratic_parts(&self, v: &[f64]) -> (f64, f64) {
        let mut dd = 0.0;
        let mut qq = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            dd += self.degree[i] * vi * vi;
            qq += vi * self.neighbor_sum(v, i);
        }
        (dd, qq)
    }

    /// `log |D − ρ Q|` and its derivative in `ρ`.
    pub fn log_det(&self, rho: f64) -> (f64, f64) {
        let mut value = self.log_det_degree;
        let mut slope = 0.0;
        for &l in &self.spectrum {
            let f = 1.0 - rho * l;
            value += libm::log(f);
            slope -= l / f;
        }
        (value, slope)
    }

    /// Dense `τ (D − ρ Q)`, row-major.
    pub fn dense_precision(&self, tau: f64, rho: f64) -> Vec<f64> {
        let n = self.len();
        let mut p = alloc::vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = tau * self.degree[i];
            for j in self.neighbors(i) {
                p[i * n + j] = -tau * rho;
            }
        }
        p
    }
}
