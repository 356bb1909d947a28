use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;

/// Bound keeping every `ρ_k` inside `(ε, 1 − ε)`.
pub const RHO_EPSILON: f64 = 1e-6;

/// One state of the benchmark model: `N × K` latent fields (row-major, pixel
/// by class), the `K × K` class correlation `A`, and per-class mean, scale
/// and spatial autocorrelation.
#[derive(Debug, Clone, PartialEq)]
pub struct SccarParams {
    pub n: usize,
    pub k: usize,
    pub omega: Vec<f64>,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
}

impl SccarParams {
    /// `Ω = m 1ᵀ`, `A = I`, `τ = 1`, `ρ = 1/2`.
    pub fn neutral(n: usize, k: usize) -> Self {
        let mut a = alloc::vec![0.0; k * k];
        for i in 0..k {
            a[i * k + i] = 1.0;
        }
        Self {
            n,
            k,
            omega: alloc::vec![0.0; n * k],
            a,
            m: alloc::vec![0.0; k],
            tau: alloc::vec![1.0; k],
            rho: alloc::vec![0.5; k],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n, self.k);
        if k == 0 || self.omega.len() != n * k || self.a.len() != k * k {
            return Err(Error::shape("sccar", "parameter arrays do not match N and K"));
        }
        if self.m.len() != k || self.tau.len() != k || self.rho.len() != k {
            return Err(Error::shape("sccar", "per-class vectors must have K entries"));
        }
        if self.tau.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("τ must be positive and finite"));
        }
        if self.rho.iter().any(|&r| !(r > RHO_EPSILON && r < 1.0 - RHO_EPSILON)) {
            return Err(Error::invalid("ρ must lie in (ε, 1 − ε)"));
        }
        for i in 0..k {
            if (self.a[i * k + i] - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("A must have a unit diagonal"));
            }
            for j in 0..i {
                if (self.a[i * k + j] - self.a[j * k + i]).abs() > 1e-12 {
                    return Err(Error::invalid("A must be symmetric"));
                }
            }
        }
        linalg::cholesky(&self.a, k).map(|_| ())
    }

    /// `U = Ω A`, `N × K` row-major.
    pub fn logits(&self) -> Vec<f64> {
        let k = self.k;
        let mut u = alloc::vec![0.0; self.n * k];
        for i in 0..self.n {
            let row = &self.omega[i * k..(i + 1) * k];
            for c in 0..k {
                u[i * k + c] = (0..k).map(|j| row[j] * self.a[j * k + c]).sum();
            }
        }
        u
    }

    /// Every free scalar, in the order of [`scalar_names`]. The diagonal of
    /// `A` is fixed and left out.
    pub fn scalars(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = self.omega.clone();
        for i in 1..k {
            for j in 0..i {
                out.push(self.a[i * k + j]);
            }
        }
        out.extend_from_slice(&self.m);
        out.extend_from_slice(&self.tau);
        out.extend_from_slice(&self.rho);
        out
    }
}

pub fn scalar_names(n: usize, k: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n * k + k * (k + 5) / 2);
    for i in 0..n {
        for c in 0..k {
            out.push(format!("omega[{i},{c}]"));
        }
    }
    for i in 1..k {
        for j in 0..i {
            out.push(format!("A[{i},{j}]"));
        }
    }
    for name in ["m", "tau", "rho"] {
        for c in 0..k {
            out.push(format!("{name}[{c}]"));
        }
    }
    out
}

/// Offsets of the blocks of an unconstrained vector.
///
/// Layout: `η` (N×K, with `ω_ik = m_k + η_ik / √τ_k`), `m`, `log τ`, logit
/// of the rescaled `ρ`, and the `K(K−1)/2` canonical partial correlations of
/// `A` in `atanh` form, row by row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub k: usize,
}

impl Layout {
    pub fn eta(&self) -> core::ops::Range<usize> {
        0..self.n * self.k
    }
    pub fn m(&self) -> core::ops::Range<usize> {
        let s = self.n * self.k;
        s..s + self.k
    }
    pub fn log_tau(&self) -> core::ops::Range<usize> {
        let s = self.m().end;
        s..s + self.k
    }
    pub fn rho(&self) -> core::ops::Range<usize> {
        let s = self.log_tau().end;
        s..s + self.k
    }
    pub fn corr(&self) -> core::ops::Range<usize> {
        let s = self.rho().end;
        s..s + self.k * (self.k - 1) / 2
    }
    pub fn dim(&self) -> usize {
        self.corr().end
    }
}

/// A point of the unconstrained space the sampler moves in.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedState {
    pub layout: Layout,
    pub values: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// `ln(1 − tanh²y)`.
pub(crate) fn log_sech2(y: f64) -> f64 {
    let a = y.abs();
    2.0 * (core::f64::consts::LN_2 - a - libm::log1p(libm::exp(-2.0 * a)))
}

pub(crate) fn rho_from(z: f64) -> f64 {
    RHO_EPSILON + (1.0 - 2.0 * RHO_EPSILON) * sigmoid(z)
}

/// Cholesky factor of a correlation matrix from canonical partial
/// correlations `z`, plus the log-Jacobian of `z ↦ L` and of `L ↦ L Lᵀ`.
pub(crate) fn corr_cholesky(z: &[f64], k: usize) -> (Vec<f64>, f64) {
    let mut l = alloc::vec![0.0; k * k];
    let mut log_jac = 0.0;
    let mut idx = 0;
    l[0] = 1.0;
    for i in 1..k {
        let mut s = 1.0;
        for j in 0..i {
            log_jac += 0.5 * libm::log(s);
            let v = z[idx] * libm::sqrt(s);
            idx += 1;
            l[i * k + j] = v;
            s -= v * v;
        }
        l[i * k + i] = libm::sqrt(s);
        log_jac += (k - i - 1) as f64 * 0.5 * libm::log(s);
    }
    (l, log_jac)
}

pub(crate) fn outer(l: &[f64], k: usize) -> Vec<f64> {
    let mut a = alloc::vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|t| l[i * k + t] * l[j * k + t]).sum();
            a[i * k + j] = v;
            a[j * k + i] = v;
        }
    }
    for i in 0..k {
        a[i * k + i] = 1.0;
    }
    a
}

impl UnconstrainedState {
    pub fn from_params(p: &SccarParams) -> Result<Self> {
        p.validate()?;
        let layout = Layout { n: p.n, k: p.k };
        let k = p.k;
        let mut values = alloc::vec![0.0; layout.dim()];
        for i in 0..p.n {
            for c in 0..k {
                values[i * k + c] = (p.omega[i * k + c] - p.m[c]) * libm::sqrt(p.tau[c]);
            }
        }
        let (mo, to, ro) = (layout.m().start, layout.log_tau().start, layout.rho().start);
        for c in 0..k {
            values[mo + c] = p.m[c];
            values[to + c] = libm::log(p.tau[c]);
            let u = (p.rho[c] - RHO_EPSILON) / (1.0 - 2.0 * RHO_EPSILON);
            values[ro + c] = libm::log(u) - libm::log1p(-u);
        }
        let l = linalg::cholesky(&p.a, k)?;
        let mut idx = layout.corr().start;
        for i in 1..k {
            let mut s = 1.0;
            for j in 0..i {
                let v = l[i * k + j];
                values[idx] = libm::atanh(v / libm::sqrt(s));
                idx += 1;
                s -= v * v;
            }
        }
        Ok(Self { layout, values })
    }

    pub fn to_params(&self) -> SccarParams {
        let Layout { n, k } = self.layout;
        let x = &self.values;
        let m = x[self.layout.m()].to_vec();
        let tau: Vec<f64> = x[self.layout.log_tau()].iter().map(|&s| libm::exp(s)).collect();
        let rho = x[self.layout.rho()].iter().map(|&z| rho_from(z)).collect();
        let mut omega = alloc::vec![0.0; n * k];
        for i in 0..n {
            for c in 0..k {
                omega[i * k + c] = m[c] + x[i * k + c] / libm::sqrt(tau[c]);
            }
        }
        let z: Vec<f64> = x[self.layout.corr()].iter().map(|&y| libm::tanh(y)).collect();
        let (l, _) = corr_cholesky(&z, k);
        SccarParams { n, k, omega, a: outer(&l, k), m, tau, rho }
    }

    /// Log-Jacobian of [`Self::to_params`], measured against Lebesgue measure
    /// on `(Ω, m, τ, ρ)` and the uniform measure on correlation matrices.
    pub fn log_jacobian(&self) -> f64 {
        let Layout { n, k } = self.layout;
        let x = &self.values;
        let mut j = 0.0;
        for &s in &x[self.layout.log_tau()] {
            j += s - 0.5 * n as f64 * s;
        }
        for &z in &x[self.layout.rho()] {
            j += libm::log(1.0 - 2.0 * RHO_EPSILON) - softplus(-z) - softplus(z);
        }
        let ys = &x[self.layout.corr()];
        let z: Vec<f64> = ys.iter().map(|&y| libm::tanh(y)).collect();
        j += corr_cholesky(&z, k).1;
        j + ys.iter().map(|&y| log_sech2(y)).sum::<f64>()
    }
}
