//! The `lulc` command line.
//!
//! Every command that writes into a directory or file also writes a
//! `run.json` next to its outputs recording the tool version and the full
//! argument set; commands whose only output is standard output write none.

mod args;
mod car;
mod data;
mod model;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use args::*;

use crate::error::{Error, Result};
use crate::fsio;

pub fn run(cli: &Cli) -> Result<()> {
    crate::parallel::with_workers(cli.workers, || match &cli.command {
        Command::Synth(a) => data::synth(cli, a),
        Command::Prepare(a) => data::prepare(cli, a),
        Command::Train(a) => model::train(cli, a),
        Command::Sample(a) => model::sample(cli, a),
        Command::Inpaint(a) => model::inpaint(cli, a),
        Command::TileInfill(a) => model::tile_infill(cli, a),
        Command::Stats(a) => data::stats(cli, a),
        Command::Calibrate(a) => model::calibrate(cli, a),
        Command::Score(a) => model::score(cli, a),
        Command::LikelihoodMap(a) => data::likelihood_map(cli, a),
        Command::SccarFit(a) => car::fit(cli, a),
        Command::SccarInpaint(a) => car::inpaint(cli, a),
        Command::ExportPpm(a) => data::export_ppm(cli, a),
    })?
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    workers: Option<usize>,
    #[serde(flatten)]
    command: &'a Command,
    /// Values of flags whose defaults depend on the inputs.
    #[serde(skip_serializing_if = "Option::is_none")]
    resolved: Option<serde_json::Value>,
}

/// Writes `dir/run.json`.
fn record_run(cli: &Cli, dir: &Path) -> Result<()> {
    record_run_resolved(cli, dir, None)
}

fn record_run_resolved(cli: &Cli, dir: &Path, resolved: Option<serde_json::Value>) -> Result<()> {
    let record = RunRecord {
        tool: "lulc",
        version: env!("CARGO_PKG_VERSION"),
        workers: cli.workers,
        command: &cli.command,
        resolved,
    };
    fsio::write_json(&dir.join("run.json"), &record)
}

/// Directory holding `file` (`.` for bare names).
fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// CSV rows to `out`, or to standard output.
fn emit_csv<T: Serialize>(cli: &Cli, rows: &[T], out: Option<&Path>) -> Result<()> {
    let bytes = fsio::csv_bytes(rows)?;
    match out {
        Some(path) => {
            fsio::atomic_write(path, &bytes)?;
            record_run(cli, &parent_dir(path))
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// File stem used as an image identifier in tables.
fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn read_rasters(paths: &[PathBuf]) -> Result<Vec<(PathBuf, lulc_core::CategoricalRaster)>> {
    let mut out = Vec::new();
    for p in paths {
        for file in fsio::list_rasters(p)? {
            let r = fsio::read_raster(&file)?;
            out.push((file, r));
        }
    }
    Ok(out)
}
