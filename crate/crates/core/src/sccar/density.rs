use alloc::format;
use alloc::vec::Vec;

use super::hmc::Target;
use super::params::{
    corr_cholesky, log_sech2, outer, rho_from, sigmoid, softplus, Layout, SccarParams, UnconstrainedState, RHO_EPSILON,
};
use super::structure::CarStructure;
use crate::error::{Error, Result};
use crate::grad::log_sum_exp;
use crate::raster::{CategoricalRaster, PixelMask};

fn check_inputs(structure: &CarStructure, raster: &CategoricalRaster, mask: &PixelMask, k: usize) -> Result<()> {
    if raster.dims() != structure.dims() || mask.dims() != structure.dims() {
        return Err(Error::DimensionMismatch { expected: structure.dims(), actual: raster.dims() });
    }
    if raster.num_classes() != k {
        return Err(Error::invalid(format!("raster has {} classes, parameters {k}", raster.num_classes())));
    }
    Ok(())
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Log posterior in nats, up to a constant depending only on `N` and `K`:
/// categorical likelihood of observed pixels under `softmax(Ω A)`, a CAR
/// density per class with precision `τ_k (D − ρ_k Q)`, `−m_k²/4`, a
/// half-Cauchy(2) density for each `τ_k`; uniform `ρ_k` and LKJ(1) on `A`
/// are constant.
pub fn log_posterior(
    params: &SccarParams,
    raster: &CategoricalRaster,
    mask: &PixelMask,
    structure: &CarStructure,
) -> Result<f64> {
    params.validate()?;
    let (n, k) = (params.n, params.k);
    if n != structure.len() {
        return Err(Error::shape("sccar", "parameters and structure disagree on N"));
    }
    check_inputs(structure, raster, mask, k)?;
    let u = params.logits();
    let mut lik = 0.0;
    for (i, &obs) in mask.observed().iter().enumerate() {
        if obs {
            let row = &u[i * k..(i + 1) * k];
            lik += row[raster.data()[i] as usize] - log_sum_exp(row);
        }
    }
    let mut total = finite(lik, "likelihood")?;
    let mut r = alloc::vec![0.0; n];
    for c in 0..k {
        for (i, v) in r.iter_mut().enumerate() {
            *v = params.omega[i * k + c] - params.m[c];
        }
        let (dd, qq) = structure.quadratic_parts(&r);
        let (tau, rho) = (params.tau[c], params.rho[c]);
        let log_det = n as f64 * libm::log(tau) + structure.log_det(rho).0;
        total += finite(0.5 * log_det - 0.5 * tau * (dd - rho * qq), &format!("CAR term of class {c}"))?;
        total += -params.m[c] * params.m[c] / 4.0;
        total += finite(
            libm::log(2.0 / (core::f64::consts::PI * (4.0 + tau * tau))),
            &format!("scale prior of class {c}"),
        )?;
    }
    Ok(total)
}

/// The posterior as a density on the unconstrained space of
/// [`UnconstrainedState`], including the Jacobian.
#[derive(Debug, Clone)]
pub struct SccarTarget<'a> {
    structure: &'a CarStructure,
    raster: &'a CategoricalRaster,
    mask: &'a PixelMask,
    layout: Layout,
}

impl<'a> SccarTarget<'a> {
    pub fn new(structure: &'a CarStructure, raster: &'a CategoricalRaster, mask: &'a PixelMask) -> Result<Self> {
        let k = raster.num_classes();
        check_inputs(structure, raster, mask, k)?;
        if mask.missing_count() == mask.observed().len() {
            return Err(Error::invalid("at least one pixel must be observed"));
        }
        Ok(Self { structure, raster, mask, layout: Layout { n: structure.len(), k } })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn state(&self, values: Vec<f64>) -> UnconstrainedState {
        UnconstrainedState { layout: self.layout, values }
    }
}

impl Target for SccarTarget<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let lay = self.layout;
        let Layout { n, k } = lay;
        let s = &self.structure;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let eta = &x[lay.eta()];
        let m = &x[lay.m()];
        let log_tau = &x[lay.log_tau()];
        let zr = &x[lay.rho()];
        let ys = &x[lay.corr()];
        let inv_sd: Vec<f64> = log_tau.iter().map(|&t| libm::exp(-0.5 * t)).collect();
        let zc: Vec<f64> = ys.iter().map(|&y| libm::tanh(y)).collect();
        let (l, corr_jac) = corr_cholesky(&zc, k);
        let a = outer(&l, k);

        let mut total = corr_jac + ys.iter().map(|&y| log_sech2(y)).sum::<f64>();
        // Likelihood: ω, U = Ω A and dL/dU = onehot − softmax on observed rows.
        let mut omega = alloc::vec![0.0; n * k];
        for i in 0..n {
            for c in 0..k {
                omega[i * k + c] = m[c] + eta[i * k + c] * inv_sd[c];
            }
        }
        let mut d_omega = alloc::vec![0.0; n * k];
        let mut d_a = alloc::vec![0.0; k * k];
        let mut u = alloc::vec![0.0; k];
        let mut g = alloc::vec![0.0; k];
        for (i, &obs) in self.mask.observed().iter().enumerate() {
            if !obs {
                continue;
            }
            let row = &omega[i * k..(i + 1) * k];
            for (c, uc) in u.iter_mut().enumerate() {
                *uc = (0..k).map(|j| row[j] * a[j * k + c]).sum();
            }
            let lse = log_sum_exp(&u);
            let class = self.raster.data()[i] as usize;
            total += u[class] - lse;
            for c in 0..k {
                g[c] = (c == class) as u8 as f64 - libm::exp(u[c] - lse);
            }
            for j in 0..k {
                d_omega[i * k + j] = (0..k).map(|c| g[c] * a[j * k + c]).sum();
                for c in 0..k {
                    d_a[j * k + c] += row[j] * g[c];
                }
            }
        }
        // Per class: CAR term in η (τ cancels against the Jacobian), priors.
        let mut v = alloc::vec![0.0; n];
        let (mo, to, ro) = (lay.m().start, lay.log_tau().start, lay.rho().start);
        for c in 0..k {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = eta[i * k + c];
            }
            let rho = rho_from(zr[c]);
            let (dd, qq) = s.quadratic_parts(&v);
            let (log_det, d_log_det) = s.log_det(rho);
            total += 0.5 * log_det - 0.5 * (dd - rho * qq);
            let mut d_log_sd = 0.0;
            let mut d_m = 0.0;
            for i in 0..n {
                let dw = d_omega[i * k + c];
                let car = s.degree()[i] * v[i] - rho * s.neighbor_sum(&v, i);
                grad[i * k + c] = dw * inv_sd[c] - car;
                d_m += dw;
                d_log_sd += dw * v[i];
            }
            let tau = libm::exp(log_tau[c]);
            total += -m[c] * m[c] / 4.0 + libm::log(2.0 / (core::f64::consts::PI * (4.0 + tau * tau))) + log_tau[c];
            grad[mo + c] = d_m - m[c] / 2.0;
            grad[to + c] = -0.5 * inv_sd[c] * d_log_sd - 2.0 * tau * tau / (4.0 + tau * tau) + 1.0;
            let sg = sigmoid(zr[c]);
            total += libm::log(1.0 - 2.0 * RHO_EPSILON) - softplus(-zr[c]) - softplus(zr[c]);
            let d_rho = 0.5 * d_log_det + 0.5 * qq;
            grad[ro + c] = d_rho * (1.0 - 2.0 * RHO_EPSILON) * sg * (1.0 - sg) + 1.0 - 2.0 * sg;
        }
        // A = L Lᵀ, then back through the partial-correlation construction.
        let mut d_l = alloc::vec![0.0; k * k];
        for i in 0..k {
            for t in 0..=i {
                d_l[i * k + t] = (0..k).map(|j| (d_a[i * k + j] + d_a[j * k + i]) * l[j * k + t]).sum();
            }
        }
        let co = lay.corr().start;
        let mut idx = 0;
        for i in 1..k {
            let row_start = idx;
            idx += i;
            let mut sv = alloc::vec![1.0; i + 1];
            for j in 0..i {
                sv[j + 1] = sv[j] - l[i * k + j] * l[i * k + j];
            }
            let mut gs_next = d_l[i * k + i] * 0.5 / l[i * k + i] + (k - i - 1) as f64 * 0.5 / sv[i];
            for j in (0..i).rev() {
                let z = zc[row_start + j];
                let lij = l[i * k + j];
                let g_tot = d_l[i * k + j] - 2.0 * lij * gs_next;
                let root = libm::sqrt(sv[j]);
                let gz = g_tot * root;
                let gs = gs_next + g_tot * z * 0.5 / root + 0.5 / sv[j];
                // dz/dy = 1 − z²; ln(1 − z²) contributes −2z directly.
                grad[co + row_start + j] = gz * (1.0 - z * z) - 2.0 * z;
                gs_next = gs;
            }
        }
        total
    }
}
