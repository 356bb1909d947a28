use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::density::SccarTarget;
use super::diagnostics;
use super::hmc::{self, Chain, HmcConfig};
use super::params::{scalar_names, SccarParams, UnconstrainedState};
use super::structure::CarStructure;
use crate::error::{Error, Result};
use crate::grad::log_sum_exp;
use crate::linalg;
use crate::raster::{CategoricalRaster, PixelMask};
use crate::rng;

/// Per-chain sampler statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub accept_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
}

/// Diagnostics of one scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SccarFit {
    /// Draws per chain, chain order.
    pub chains: Vec<Vec<SccarParams>>,
    pub stats: Vec<ChainStats>,
    pub summary: Vec<ParamSummary>,
}

impl SccarFit {
    /// All draws, chains concatenated.
    pub fn draws(&self) -> impl Iterator<Item = &SccarParams> {
        self.chains.iter().flatten()
    }

    pub fn max_rhat(&self) -> f64 {
        self.summary.iter().map(|s| s.rhat).filter(|r| !r.is_nan()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Builds the fit from finished chains and computes diagnostics; needs
    /// at least two chains of at least four draws for R̂ and ESS.
    pub fn from_chains(chains: Vec<Vec<SccarParams>>, stats: Vec<ChainStats>) -> Result<Self> {
        let first = chains.first().and_then(|c| c.first()).ok_or(Error::Empty("posterior draws"))?;
        let names = scalar_names(first.n, first.k);
        let traces: Vec<Vec<Vec<f64>>> =
            chains.iter().map(|c| transpose(&c.iter().map(SccarParams::scalars).collect::<Vec<_>>())).collect();
        let mut summary = Vec::with_capacity(names.len());
        for (j, name) in names.into_iter().enumerate() {
            let per_chain: Vec<&[f64]> = traces.iter().map(|t| t[j].as_slice()).collect();
            let (mean, sd) = diagnostics::mean_sd(&per_chain);
            let (rhat, ess) = if per_chain.len() >= 2 && per_chain[0].len() >= 4 {
                (diagnostics::rhat(&per_chain)?, diagnostics::ess(&per_chain)?)
            } else {
                (f64::NAN, f64::NAN)
            };
            summary.push(ParamSummary { name, rhat, ess, mean, sd });
        }
        Ok(Self { chains, stats, summary })
    }
}

fn transpose(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// One chain of [`hmc_fit`], for callers that run chains in parallel.
pub fn fit_chain(
    raster: &CategoricalRaster,
    mask: &PixelMask,
    structure: &CarStructure,
    config: &HmcConfig,
    chain: usize,
) -> Result<(Vec<SccarParams>, ChainStats)> {
    let target = SccarTarget::new(structure, raster, mask)?;
    let c: Chain = hmc::run_chain(&target, config, chain)?;
    let draws = (0..c.len()).map(|i| target.state(c.draw(i).to_vec()).to_params()).collect();
    Ok((draws, ChainStats { accept_rate: c.accept_rate, divergences: c.divergences, step_size: c.step_size }))
}

/// Posterior draws for one partially observed raster.
pub fn hmc_fit(
    raster: &CategoricalRaster,
    mask: &PixelMask,
    structure: &CarStructure,
    config: &HmcConfig,
) -> Result<SccarFit> {
    let (chains, stats) = (0..config.chains)
        .map(|c| fit_chain(raster, mask, structure, config, c))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    SccarFit::from_chains(chains, stats)
}

fn draw_from_logits(row: &[f64], u: f64) -> u8 {
    let lse = log_sum_exp(row);
    let mut acc = 0.0;
    for (c, &v) in row.iter().enumerate() {
        acc += libm::exp(v - lse);
        if u < acc {
            return c as u8;
        }
    }
    (row.len() - 1) as u8
}

/// Posterior-predictive completions: completion `i` uses substream `i` of
/// `seed` to pick a draw uniformly and then draws every missing pixel from
/// `softmax(Ω A)` of that draw.
pub fn predictive_inpaint(
    draws: &[SccarParams],
    raster: &CategoricalRaster,
    mask: &PixelMask,
    count: usize,
    seed: u64,
) -> Result<Vec<CategoricalRaster>> {
    let first = draws.first().ok_or(Error::Empty("posterior draws"))?;
    mask.check_matches(raster)?;
    if first.n != raster.len() || first.k != raster.num_classes() {
        return Err(Error::shape("sccar", "draws do not match the raster"));
    }
    let k = first.k;
    (0..count)
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            let p = &draws[r.random_range(0..draws.len())];
            let u = p.logits();
            let mut out = raster.clone();
            let w = raster.width();
            for (j, &obs) in mask.observed().iter().enumerate() {
                if !obs {
                    out.set(j / w, j % w, draw_from_logits(&u[j * k..(j + 1) * k], r.random::<f64>()));
                }
            }
            Ok(out)
        })
        .collect()
}

/// Posterior draws as a completion sampler; the temperature is ignored.
#[derive(Debug, Clone, Copy)]
pub struct SccarSampler<'a> {
    pub draws: &'a [SccarParams],
}

impl crate::landstat::CompletionSampler for SccarSampler<'_> {
    fn complete(
        &self,
        image: &CategoricalRaster,
        mask: &PixelMask,
        count: usize,
        _temperature: f64,
        seed: u64,
    ) -> Result<Vec<CategoricalRaster>> {
        predictive_inpaint(self.draws, image, mask, count, seed)
    }
}

/// Draws `ω_k ~ N(m_k 1, (τ_k (D − ρ_k Q))⁻¹)` for every class and then a
/// class per pixel; returns the raster and the fields in `params.omega`.
pub fn simulate(structure: &CarStructure, base: &SccarParams, seed: u64) -> Result<(CategoricalRaster, SccarParams)> {
    base.validate()?;
    let (n, k) = (base.n, base.k);
    if n != structure.len() {
        return Err(Error::shape("sccar", "parameters and structure disagree on N"));
    }
    let mut r = rng::seeded(seed);
    let mut params = base.clone();
    for c in 0..k {
        let l = linalg::cholesky(&structure.dense_precision(base.tau[c], base.rho[c]), n)?;
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
        // Lᵀ x = z gives x with covariance (L Lᵀ)⁻¹.
        let mut x = alloc::vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = z[i] - (i + 1..n).map(|t| l[t * n + i] * x[t]).sum::<f64>();
            x[i] = s / l[i * n + i];
        }
        for (i, xi) in x.iter().enumerate() {
            params.omega[i * k + c] = base.m[c] + xi;
        }
    }
    let u = params.logits();
    let data = (0..n).map(|i| draw_from_logits(&u[i * k..(i + 1) * k], r.random::<f64>())).collect();
    let (h, w) = structure.dims();
    Ok((CategoricalRaster::new(h, w, k, data)?, params))
}

/// Unconstrained coordinates of `params`, for callers seeding chains.
pub fn unconstrain(params: &SccarParams) -> Result<UnconstrainedState> {
    UnconstrainedState::from_params(params)
}
