//! Data-parallel drivers over the core algorithms.
//!
//! Work is split by completion, truth image or chain, each of which owns a
//! seed-derived random stream, so outputs do not depend on the number of
//! worker threads.

use lulc_core::landstat::{self, CompletionSampler, CoverageReport, TruthOutcome};
use lulc_core::pccnn::Model;
use lulc_core::sampler::{self, Completion, SampleRequest, ScoredImage, DEFAULT_CHUNK};
use lulc_core::sccar::{self, CarStructure, HmcConfig, SccarFit};
use lulc_core::tiler::{self, TilePlan};
use lulc_core::{CategoricalRaster, PixelMask};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == Some(0) {
        return Err(Error::usage("--workers must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::usage(e.to_string()))?;
    Ok(pool.install(f))
}

/// [`sampler::sample`], with chunks of completions spread over threads.
pub fn sample(model: &Model, request: &SampleRequest<'_>) -> Result<Vec<Completion>> {
    let ranges: Vec<_> =
        (0..request.count).step_by(DEFAULT_CHUNK).map(|s| s..(s + DEFAULT_CHUNK).min(request.count)).collect();
    let parts = ranges
        .into_par_iter()
        .map(|r| sampler::sample_range(model, request, r, DEFAULT_CHUNK))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn score(model: &Model, rasters: &[CategoricalRaster]) -> Result<Vec<ScoredImage>> {
    Ok(rasters.par_iter().map(|r| sampler::score(model, r)).collect::<Result<Vec<_>, _>>()?)
}

/// `count` tiled completions; completion `j` runs the plan with seed
/// `completion_seed(seed, j)`.
#[allow(clippy::too_many_arguments)]
pub fn tile_infill(
    plan: &TilePlan,
    model: &Model,
    raster: &CategoricalRaster,
    mask: &PixelMask,
    temperature: f64,
    seed: u64,
    flips: bool,
    count: usize,
) -> Result<Vec<CategoricalRaster>> {
    Ok((0..count)
        .into_par_iter()
        .map(|j| tiler::run(plan, model, raster, mask, temperature, tiler::completion_seed(seed, j), flips))
        .collect::<Result<Vec<_>, _>>()?)
}

/// [`landstat::coverage`] with truths spread over threads.
pub fn coverage<S: CompletionSampler + Sync>(
    truths: &[(CategoricalRaster, PixelMask)],
    sampler: &S,
    samples_per_image: usize,
    percentiles: &[f64; 3],
    temperatures: &[f64],
    seed: u64,
) -> Result<CoverageReport> {
    if truths.is_empty() {
        return Err(lulc_core::Error::Empty("coverage truths").into());
    }
    let outcomes = temperatures
        .iter()
        .map(|&t| {
            truths
                .par_iter()
                .enumerate()
                .map(|(i, (image, mask))| {
                    landstat::evaluate_truth(
                        i,
                        image,
                        mask,
                        sampler,
                        samples_per_image,
                        percentiles,
                        t,
                        seed.wrapping_add(i as u64),
                    )
                })
                .collect::<Result<Vec<TruthOutcome>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CoverageReport::from_outcomes(temperatures, percentiles, &outcomes, samples_per_image))
}

/// [`sccar::hmc_fit`] with one thread per chain.
pub fn sccar_fit(
    raster: &CategoricalRaster,
    mask: &PixelMask,
    structure: &CarStructure,
    config: &HmcConfig,
) -> Result<SccarFit> {
    let results = (0..config.chains)
        .into_par_iter()
        .map(|c| sccar::fit_chain(raster, mask, structure, config, c))
        .collect::<Result<Vec<_>, _>>()?;
    let (chains, stats) = results.into_iter().unzip();
    Ok(SccarFit::from_chains(chains, stats)?)
}
