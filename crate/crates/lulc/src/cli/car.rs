use std::time::Instant;

use lulc_core::sccar::{self, CarStructure, HmcConfig};
use serde::Serialize;

use super::{record_run, Cli, SccarFitArgs, SccarInpaintArgs};
use crate::error::{Error, Result};
use crate::formats::{self, DrawTable};
use crate::{fsio, parallel};

#[derive(Serialize)]
struct DiagnosticRow<'a> {
    parameter: &'a str,
    rhat: f64,
    ess_proxy: f64,
    mean: f64,
    sd: f64,
}

#[derive(Serialize)]
struct ChainReport {
    accept_rate: f64,
    divergences: usize,
    step_size: f64,
}

#[derive(Serialize)]
struct FitReport {
    config: HmcConfig,
    max_rhat: f64,
    undefined_rhat: usize,
    wall_seconds: f64,
    chains: Vec<ChainReport>,
}

pub(super) fn fit(cli: &Cli, a: &SccarFitArgs) -> Result<()> {
    let raster = fsio::read_raster(&a.raster)?;
    let mask = fsio::read_mask(&a.mask)?;
    if mask.dims() != raster.dims() {
        return Err(Error::usage("mask and raster dimensions differ"));
    }
    let config = HmcConfig {
        chains: a.chains,
        tune: a.tune,
        draws: a.draws,
        target_accept: a.target_accept,
        leapfrog_steps: a.leapfrog_steps,
        seed: a.seed,
        ..HmcConfig::default()
    };
    config.validate()?;
    let (h, w) = raster.dims();
    let structure = CarStructure::grid(h, w)?;
    let start = Instant::now();
    let fit = parallel::sccar_fit(&raster, &mask, &structure, &config)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let table = DrawTable { height: h, width: w, chains: fit.chains.clone() };
    fsio::atomic_write(&a.out_dir.join("draws.sccd"), &formats::encode_draws(&table)?)?;
    let rows: Vec<_> = fit
        .summary
        .iter()
        .map(|s| DiagnosticRow { parameter: &s.name, rhat: s.rhat, ess_proxy: s.ess, mean: s.mean, sd: s.sd })
        .collect();
    fsio::atomic_write(&a.out_dir.join("diagnostics.csv"), &fsio::csv_bytes(&rows)?)?;
    let undefined = fit.summary.iter().filter(|s| s.rhat.is_nan()).count();
    if undefined > 0 {
        eprintln!("warning: R-hat undefined for {undefined} parameters (constant within and across chains)");
    }
    let report = FitReport {
        config,
        max_rhat: fit.max_rhat(),
        undefined_rhat: undefined,
        wall_seconds,
        chains: fit
            .stats
            .iter()
            .map(|s| ChainReport { accept_rate: s.accept_rate, divergences: s.divergences, step_size: s.step_size })
            .collect(),
    };
    fsio::write_json(&a.out_dir.join("fit.json"), &report)?;
    record_run(cli, &a.out_dir)
}

pub(super) fn inpaint(cli: &Cli, a: &SccarInpaintArgs) -> Result<()> {
    let table = formats::decode_draws(&fsio::read(&a.draws)?)
        .map_err(|e| Error::InFile { path: a.draws.clone(), source: Box::new(e) })?;
    let raster = fsio::read_raster(&a.raster)?;
    let mask = fsio::read_mask(&a.mask)?;
    if raster.dims() != (table.height, table.width) || mask.dims() != raster.dims() {
        return Err(Error::usage("draws, raster and mask dimensions differ"));
    }
    let draws = table.draws();
    let completions = sccar::predictive_inpaint(&draws, &raster, &mask, a.count, a.seed)?;
    for (i, c) in completions.iter().enumerate() {
        fsio::write_raster(&fsio::numbered(&a.out_dir, "sccar", i, completions.len(), "cras"), c)?;
    }
    record_run(cli, &a.out_dir)
}
