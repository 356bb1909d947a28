use std::path::Path;

use lulc_core::landstat::{self, GridSpec, StatisticVector};
use lulc_core::raster::{self, ClassPalette, DatasetManifest, PixelMask, SynthParams, WindowSpec};
use serde::{Deserialize, Serialize};

use super::{emit_csv, read_rasters, record_run, stem, Cli, ExportPpmArgs, LikelihoodMapArgs, PrepareArgs, StatsArgs, SynthArgs};
use crate::error::{Error, Result};
use crate::{formats, fsio, parallel};

pub(super) fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let params = SynthParams {
        smoothing_radius: a.smoothing_radius,
        smoothing_passes: a.smoothing_passes,
        dominance: a.dominance,
        road_probability: a.road_probability,
        water_probability: a.water_probability,
        ..SynthParams::default()
    };
    for i in 0..a.count {
        let r = raster::synth_landscape(a.height, a.width, a.classes, a.seed.wrapping_add(i as u64), &params)?;
        fsio::write_raster(&fsio::numbered(&a.out_dir, "synth", i, a.count, "cras"), &r)?;
        let mask = match (&a.mask, &a.hole) {
            (Some(family), _) => Some(PixelMask::from_family(super::model::mask_family(*family), a.height, a.width)),
            (None, Some(rect)) => {
                if rect.len() != 4 {
                    return Err(Error::usage("--hole takes row,col,height,width"));
                }
                if rect[0] + rect[2] > a.height || rect[1] + rect[3] > a.width {
                    return Err(Error::usage("--hole extends past the raster"));
                }
                Some(PixelMask::with_missing_rect(a.height, a.width, rect[0], rect[1], rect[2], rect[3]))
            }
            (None, None) => None,
        };
        if let Some(m) = mask {
            fsio::write_mask(&fsio::numbered(&a.out_dir, "synth", i, a.count, "cmsk"), &m)?;
        }
    }
    record_run(cli, &a.out_dir)
}

pub(super) fn prepare(cli: &Cli, a: &PrepareArgs) -> Result<()> {
    if a.coarsen == 0 {
        return Err(Error::usage("--coarsen must be at least 1"));
    }
    let sources = read_rasters(&a.inputs)?;
    let coarse = sources
        .iter()
        .map(|(_, r)| if a.coarsen > 1 { raster::coarsen_majority(r, a.coarsen) } else { Ok(r.clone()) })
        .collect::<Result<Vec<_>, _>>()?;
    let spec = WindowSpec {
        window: a.window,
        count: a.count,
        water_class: a.water_class,
        water_fraction_limit: a.water_limit,
        max_consecutive_rejections: a.max_rejections,
    };
    let refs: Vec<_> = coarse.iter().collect();
    let (manifest, windows) = raster::extract_windows(&refs, &spec, a.seed)?;
    for (i, w) in windows.iter().enumerate() {
        fsio::write_raster(&fsio::numbered(&a.out_dir, "window", i, windows.len(), "cras"), w)?;
    }
    fsio::write_json(&a.out_dir.join("manifest.json"), &manifest)?;
    let names: Vec<String> = sources.iter().map(|(p, _)| p.display().to_string()).collect();
    fsio::write_json(&a.out_dir.join("sources.json"), &names)?;
    record_run(cli, &a.out_dir)
}

#[derive(Serialize)]
struct StatsRow {
    id: String,
    entropy: f64,
    adjacency: f64,
    patch_count: f64,
    modal_proportion: f64,
}

pub(super) fn stats(cli: &Cli, a: &StatsArgs) -> Result<()> {
    let rows: Vec<StatsRow> = read_rasters(&a.rasters)?
        .iter()
        .map(|(p, r)| {
            let s = StatisticVector::of(r);
            StatsRow {
                id: stem(p),
                entropy: s.entropy,
                adjacency: s.adjacency,
                patch_count: s.patch_count,
                modal_proportion: s.modal_proportion,
            }
        })
        .collect();
    emit_csv(cli, &rows, a.out.as_deref())
}

pub(super) fn export_ppm(cli: &Cli, a: &ExportPpmArgs) -> Result<()> {
    let r = fsio::read_raster(&a.raster)?;
    let palette = match &a.palette {
        Some(p) => fsio::read_json::<ClassPalette>(p)?,
        None if r.num_classes() == 20 => ClassPalette::nlcd(),
        None => ClassPalette::generic(r.num_classes())?,
    };
    fsio::atomic_write(&a.out, &formats::export_ppm(&r, &palette)?)?;
    record_run(cli, &super::parent_dir(&a.out))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Point {
    x: f64,
    y: f64,
    value: f64,
}

fn read_points(path: &Path) -> Result<Vec<Point>> {
    let bytes = fsio::read(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let points = reader.deserialize().collect::<Result<Vec<Point>, _>>()?;
    if points.is_empty() {
        return Err(Error::usage(format!("{}: no points", path.display())));
    }
    Ok(points)
}

/// Scores the manifest windows of one source; each point sits at its
/// window's center in source pixel coordinates (x right, y down).
fn scored_points(a: &LikelihoodMapArgs) -> Result<Vec<Point>> {
    let (Some(manifest), Some(images), Some(ckpt)) = (&a.manifest, &a.images, &a.checkpoint) else {
        return Err(Error::usage("need --points, or all of --manifest, --images and --checkpoint"));
    };
    let manifest: DatasetManifest = fsio::read_json(manifest)?;
    let files = fsio::list_rasters(images)?;
    if files.len() != manifest.entries.len() {
        return Err(Error::usage(format!(
            "manifest lists {} windows but {} has {}",
            manifest.entries.len(),
            images.display(),
            files.len()
        )));
    }
    let model = super::model::load_model(ckpt)?;
    let mut rasters = Vec::new();
    let mut centers = Vec::new();
    let half = manifest.window_size as f64 / 2.0;
    for (file, e) in files.iter().zip(&manifest.entries) {
        if e.source_id == a.source {
            rasters.push(fsio::read_raster(file)?);
            centers.push((e.col_offset as f64 + half, e.row_offset as f64 + half));
        }
    }
    if rasters.is_empty() {
        return Err(Error::usage(format!("no windows from source {}", a.source)));
    }
    let scores = parallel::score(&model, &rasters)?;
    Ok(centers.into_iter().zip(scores).map(|((x, y), s)| Point { x, y, value: s.bits_per_dim }).collect())
}

pub(super) fn likelihood_map(cli: &Cli, a: &LikelihoodMapArgs) -> Result<()> {
    if !(a.step > 0.0) {
        return Err(Error::usage("--step must be positive"));
    }
    let points = match &a.points {
        Some(p) => read_points(p)?,
        None => scored_points(a)?,
    };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &points {
        (x0, x1, y0, y1) = (x0.min(p.x), x1.max(p.x), y0.min(p.y), y1.max(p.y));
    }
    let length_scale = a.length_scale.unwrap_or_else(|| {
        let extent = (x1 - x0).max(y1 - y0);
        if extent > 0.0 { extent / 5.0 } else { 1.0 }
    });
    let grid = GridSpec {
        x0,
        y0,
        dx: a.step,
        dy: a.step,
        nx: ((x1 - x0) / a.step).floor() as usize + 1,
        ny: ((y1 - y0) / a.step).floor() as usize + 1,
    };
    let triples: Vec<_> = points.iter().map(|p| (p.x, p.y, p.value)).collect();
    let surface = landstat::rbf_interpolate(&triples, &grid, length_scale)?;
    let rows: Vec<Point> = (0..grid.ny)
        .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
        .map(|(i, j)| Point {
            x: grid.x0 + i as f64 * grid.dx,
            y: grid.y0 + j as f64 * grid.dy,
            value: surface[j * grid.nx + i],
        })
        .collect();
    fsio::atomic_write(&a.out_dir.join("points.csv"), &fsio::csv_bytes(&points)?)?;
    fsio::atomic_write(&a.out_dir.join("surface.csv"), &fsio::csv_bytes(&rows)?)?;
    let image = formats::heatmap_ppm(&formats::normalize(&surface), grid.ny, grid.nx);
    fsio::atomic_write(&a.out_dir.join("surface.ppm"), &image)?;
    record_run(cli, &a.out_dir)
}
