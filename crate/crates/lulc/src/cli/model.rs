use std::path::{Path, PathBuf};
use std::time::Instant;

use lulc_core::landstat::DEFAULT_PERCENTILES;
use lulc_core::pccnn::{self, Model, ModelConfig, Split, TrainConfig, Trainer};
use lulc_core::raster::{MaskFamily, DEVELOPED_CLASSES};
use lulc_core::sampler::{Completion, ModelSampler, Orientation, SampleRequest};
use lulc_core::{grad::AdamConfig, tiler, CategoricalRaster, PixelMask};
use serde::{Deserialize, Serialize};

use super::{
    emit_csv, parent_dir, read_rasters, record_run, record_run_resolved, stem, CalibrateArgs, Cli, InpaintArgs, MaskArg, OrientationArg,
    Preset, SampleArgs, ScoreArgs, TileInfillArgs, TrainArgs,
};
use crate::error::{Error, Result};
use crate::formats::{self, Checkpoint};
use crate::{fsio, parallel};

pub(super) fn load_model(path: &Path) -> Result<Model> {
    let bytes = fsio::read(path)?;
    formats::decode_checkpoint(&bytes)
        .map(|c| c.model)
        .map_err(|e| Error::InFile { path: path.to_path_buf(), source: Box::new(e) })
}

fn check_fits(model: &Model, raster: &CategoricalRaster, what: &Path) -> Result<()> {
    let c = model.config();
    if raster.num_classes() != c.num_classes {
        return Err(Error::usage(format!(
            "{}: {} classes, model expects {}",
            what.display(),
            raster.num_classes(),
            c.num_classes
        )));
    }
    Ok(())
}

fn check_window(model: &Model, raster: &CategoricalRaster, what: &Path) -> Result<()> {
    check_fits(model, raster, what)?;
    let n = model.config().image_size;
    if raster.dims() != (n, n) {
        return Err(Error::usage(format!("{}: {:?} raster, model window is {n}x{n}", what.display(), raster.dims())));
    }
    Ok(())
}

fn orientation(o: OrientationArg) -> Orientation {
    match o {
        OrientationArg::Identity => Orientation::Identity,
        OrientationArg::RandomFlips => Orientation::RandomFlips,
    }
}

fn read_mask_for(path: &Path, raster: &CategoricalRaster) -> Result<PixelMask> {
    let mask = fsio::read_mask(path)?;
    if mask.dims() != raster.dims() {
        return Err(Error::usage(format!("{}: mask {:?} does not match raster {:?}", path.display(), mask.dims(), raster.dims())));
    }
    Ok(mask)
}

#[derive(Serialize, Deserialize)]
struct LogRow {
    epoch: usize,
    split: Split,
    nll_nats: f64,
    bits_per_dim: f64,
    wall_seconds: f64,
}

fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = fsio::read(path)?;
    Ok(csv::Reader::from_reader(bytes.as_slice()).deserialize().collect::<Result<Vec<LogRow>, _>>()?)
}

fn load_split(dir: &Path) -> Result<Vec<CategoricalRaster>> {
    Ok(read_rasters(&[dir.to_path_buf()])?.into_iter().map(|(_, r)| r).collect())
}

pub(super) fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut data = load_split(&a.data)?;
    let heldout = match &a.heldout {
        Some(dir) => load_split(dir)?,
        None => {
            if !(0.0..1.0).contains(&a.heldout_fraction) {
                return Err(Error::usage("--heldout-fraction must lie in [0, 1)"));
            }
            let n = (data.len() as f64 * a.heldout_fraction).round() as usize;
            data.split_off(data.len() - n)
        }
    };
    let first = &data.first().ok_or_else(|| Error::usage("empty training set"))?;
    if first.height() != first.width() {
        return Err(Error::usage("training windows must be square"));
    }
    let (size, k) = (first.height(), first.num_classes());
    if data.iter().chain(&heldout).any(|r| r.dims() != (size, size) || r.num_classes() != k) {
        return Err(Error::usage("all windows must share size and class count"));
    }
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
        seed: a.seed,
        ..TrainConfig::default()
    };
    let log_path = a.log.clone().unwrap_or_else(|| parent_dir(&a.out).join("train_log.csv"));
    let (mut model, mut trainer, mut log) = match &a.resume {
        Some(path) => {
            let ckpt = formats::decode_checkpoint(&fsio::read(path)?)
                .map_err(|e| Error::InFile { path: path.clone(), source: Box::new(e) })?;
            let adam = ckpt.adam.ok_or_else(|| Error::usage(format!("{}: no optimizer state", path.display())))?;
            let c = ckpt.model.config();
            if (c.image_size, c.num_classes) != (size, k) {
                return Err(Error::usage("checkpoint does not match the data"));
            }
            let trainer = Trainer::with_state(&ckpt.model, config.clone(), adam, ckpt.epoch)?;
            let log: Vec<LogRow> = read_log(&log_path)?.into_iter().filter(|r| r.epoch <= ckpt.epoch).collect();
            (ckpt.model, trainer, log)
        }
        None => {
            let model_config = match &a.model_config {
                Some(p) => fsio::read_json::<ModelConfig>(p)?,
                None => {
                    let base = match a.preset {
                        Preset::Desk => ModelConfig::desk(),
                        Preset::Paper => ModelConfig::paper(),
                    };
                    ModelConfig { image_size: size, num_classes: k, ..base }
                }
            };
            if (model_config.image_size, model_config.num_classes) != (size, k) {
                return Err(Error::usage("model configuration does not match the data"));
            }
            let model = Model::new(model_config, a.seed)?;
            let trainer = Trainer::new(&model, config.clone())?;
            (model, trainer, Vec::new())
        }
    };
    let start = Instant::now();
    let offset = log.last().map_or(0.0, |r| r.wall_seconds);
    let push = |log: &mut Vec<LogRow>, epoch, split, nll: pccnn::Nll| {
        eprintln!("epoch {epoch:>3} {split:?}: {:.4} bits/dim", nll.bits_per_dim());
        log.push(LogRow {
            epoch,
            split,
            nll_nats: nll.nats,
            bits_per_dim: nll.bits_per_dim(),
            wall_seconds: offset + start.elapsed().as_secs_f64(),
        });
    };
    if trainer.epochs_done() == 0 {
        push(&mut log, 0, Split::Train, pccnn::evaluate(&model, &data, config.eval_batch)?);
        if !heldout.is_empty() {
            push(&mut log, 0, Split::Heldout, pccnn::evaluate(&model, &heldout, config.eval_batch)?);
        }
    }
    let save = |model: &Model, trainer: &Trainer, log: &[LogRow]| -> Result<()> {
        let ckpt = Checkpoint {
            model: model.clone(),
            epoch: trainer.epochs_done(),
            train: Some(config.clone()),
            adam: Some(trainer.adam().clone()),
        };
        fsio::atomic_write(&a.out, &formats::encode_checkpoint(&ckpt))?;
        fsio::atomic_write(&log_path, &fsio::csv_bytes(log)?)
    };
    save(&model, &trainer, &log)?;
    let resolved = serde_json::json!({ "log": log_path, "model_config": model.config(), "train_config": config });
    record_run_resolved(cli, &parent_dir(&a.out), Some(resolved))?;
    while trainer.epochs_done() < a.epochs {
        let nll = trainer.epoch(&mut model, &data)?;
        let epoch = trainer.epochs_done();
        push(&mut log, epoch, Split::Train, nll);
        if !heldout.is_empty() {
            push(&mut log, epoch, Split::Heldout, pccnn::evaluate(&model, &heldout, config.eval_batch)?);
        }
        save(&model, &trainer, &log)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompletionRecord {
    file: String,
    log_prob: f64,
    clamped: usize,
}

#[derive(Serialize)]
struct CompletionSidecar {
    seed: u64,
    temperature: f64,
    orientation: Orientation,
    wall_seconds: f64,
    completions: Vec<CompletionRecord>,
}

fn write_completions(
    dir: &Path,
    prefix: &str,
    completions: &[Completion],
    request: &SampleRequest<'_>,
    wall_seconds: f64,
) -> Result<()> {
    let mut records = Vec::with_capacity(completions.len());
    for (i, c) in completions.iter().enumerate() {
        let path = fsio::numbered(dir, prefix, i, completions.len(), "cras");
        fsio::write_raster(&path, &c.raster)?;
        records.push(CompletionRecord {
            file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            log_prob: c.log_prob,
            clamped: c.clamped,
        });
    }
    let sidecar = CompletionSidecar {
        seed: request.seed,
        temperature: request.temperature,
        orientation: request.orientation,
        wall_seconds,
        completions: records,
    };
    fsio::write_json(&dir.join(format!("{prefix}_completions.json")), &sidecar)
}

pub(super) fn sample(cli: &Cli, a: &SampleArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let c = model.config();
    let image = CategoricalRaster::filled(c.image_size, c.image_size, c.num_classes, 0)?;
    let mask = PixelMask::all_missing(c.image_size, c.image_size);
    let request = SampleRequest {
        image: &image,
        mask: &mask,
        temperature: a.temp,
        seed: a.seed,
        count: a.count,
        orientation: Orientation::Identity,
    };
    let start = Instant::now();
    let completions = parallel::sample(&model, &request)?;
    write_completions(&a.out_dir, "sample", &completions, &request, start.elapsed().as_secs_f64())?;
    record_run(cli, &a.out_dir)
}

pub(super) fn inpaint(cli: &Cli, a: &InpaintArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let raster = fsio::read_raster(&a.raster)?;
    check_window(&model, &raster, &a.raster)?;
    let mask = read_mask_for(&a.mask, &raster)?;
    let request = SampleRequest {
        image: &raster,
        mask: &mask,
        temperature: a.temp,
        seed: a.seed,
        count: a.count,
        orientation: orientation(a.orientation),
    };
    let start = Instant::now();
    let completions = parallel::sample(&model, &request)?;
    let dir = a.out_dir.clone().unwrap_or_else(|| parent_dir(&a.raster));
    let prefix = format!("{}_inpaint", stem(&a.raster));
    write_completions(&dir, &prefix, &completions, &request, start.elapsed().as_secs_f64())?;
    record_run_resolved(cli, &dir, Some(serde_json::json!({ "out_dir": dir })))
}

/// Margin giving each step the same share of context as 27 pixels of a
/// 40-pixel window.
pub fn default_margin(window: usize) -> usize {
    ((window * tiler::DEFAULT_MARGIN) as f64 / 40.0).round() as usize
}

pub(super) fn tile_infill(cli: &Cli, a: &TileInfillArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let raster = fsio::read_raster(&a.raster)?;
    check_fits(&model, &raster, &a.raster)?;
    let mask = read_mask_for(&a.mask, &raster)?;
    let window = model.config().image_size;
    let margin = a.margin.unwrap_or_else(|| default_margin(window));
    let plan = tiler::plan(&mask, window, margin)?;
    let k = raster.num_classes();
    let classes: Vec<u8> = if a.classes.is_empty() {
        DEVELOPED_CLASSES.iter().copied().filter(|&c| (c as usize) < k).collect()
    } else {
        a.classes.clone()
    };
    if let Some(&bad) = classes.iter().find(|&&c| c as usize >= k) {
        return Err(Error::usage(format!("class {bad} out of range for {k} classes")));
    }
    if a.count == 0 {
        return Err(Error::usage("--count must be positive"));
    }
    let tiles = parallel::tile_infill(&plan, &model, &raster, &mask, a.temp, a.seed, a.flips, a.count)?;
    let dir: PathBuf = a.out_dir.clone().unwrap_or_else(|| parent_dir(&a.raster));
    for (i, t) in tiles.iter().enumerate() {
        fsio::write_raster(&fsio::numbered(&dir, "tile", i, tiles.len(), "cras"), t)?;
    }
    let map = tiler::probability_map(&tiles, &classes, &mask)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..map.width).map(|c| format!("col_{c}")))?;
    for row in map.values.chunks(map.width) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("csv buffer", e.into_error()))?;
    fsio::atomic_write(&dir.join("probability.csv"), &bytes)?;
    fsio::atomic_write(&dir.join("probability.ppm"), &formats::heatmap_ppm(&map.values, map.height, map.width))?;
    let resolved = serde_json::json!({ "out_dir": dir, "margin": margin, "classes": classes, "steps": plan.steps.len() });
    record_run_resolved(cli, &dir, Some(resolved))
}

pub(super) fn mask_family(m: MaskArg) -> MaskFamily {
    match m {
        MaskArg::TopMissing => MaskFamily::TopMissing,
        MaskArg::BottomMissing => MaskFamily::BottomMissing,
        MaskArg::CenterMissing => MaskFamily::CenterMissing,
        MaskArg::AllMissing => MaskFamily::AllMissing,
    }
}

pub(super) fn calibrate(cli: &Cli, a: &CalibrateArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let mut truths = Vec::new();
    for (path, r) in read_rasters(std::slice::from_ref(&a.images))? {
        check_window(&model, &r, &path)?;
        let (h, w) = r.dims();
        truths.push((r, PixelMask::from_family(mask_family(a.mask), h, w)));
    }
    if a.samples < 2 {
        return Err(Error::usage("--samples must be at least 2"));
    }
    let sampler = ModelSampler { model: &model, orientation: orientation(a.orientation) };
    let report = parallel::coverage(&truths, &sampler, a.samples, &DEFAULT_PERCENTILES, &a.temps, a.seed)?;
    emit_csv(cli, &report.rows, a.out.as_deref())
}

#[derive(Serialize)]
struct ScoreRow {
    id: String,
    nats: f64,
    bits_per_dim: f64,
}

pub(super) fn score(cli: &Cli, a: &ScoreArgs) -> Result<()> {
    let model = load_model(&a.checkpoint)?;
    let images = read_rasters(std::slice::from_ref(&a.images))?;
    for (p, r) in &images {
        check_window(&model, r, p)?;
    }
    let rasters: Vec<_> = images.iter().map(|(_, r)| r.clone()).collect();
    let scores = parallel::score(&model, &rasters)?;
    let rows: Vec<ScoreRow> = images
        .iter()
        .zip(scores)
        .map(|((p, _), s)| ScoreRow { id: stem(p), nats: s.nats, bits_per_dim: s.bits_per_dim })
        .collect();
    emit_csv(cli, &rows, a.out.as_deref())
}
