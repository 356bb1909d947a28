//! File access. Every write goes to a temporary file in the target
//! directory and is renamed into place, so readers never see partial files.

use std::io::Write;
use std::path::{Path, PathBuf};

use lulc_core::{CategoricalRaster, PixelMask};

use crate::error::{Error, Result};
use crate::formats;

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut raw = serde_json::to_vec_pretty(value)?;
    raw.push(b'\n');
    atomic_write(path, &raw)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read(path)?)?)
}

/// CSV built in memory from serializable rows (header from field names).
pub fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::io("csv buffer", e.into_error()))
}

pub fn read_raster(path: &Path) -> Result<CategoricalRaster> {
    formats::decode_cras(&read(path)?).map_err(|e| with_path(path, e))
}

pub fn read_mask(path: &Path) -> Result<PixelMask> {
    formats::decode_cmsk(&read(path)?).map_err(|e| with_path(path, e))
}

pub fn write_raster(path: &Path, raster: &CategoricalRaster) -> Result<()> {
    atomic_write(path, &formats::encode_cras(raster)?)
}

pub fn write_mask(path: &Path, mask: &PixelMask) -> Result<()> {
    atomic_write(path, &formats::encode_cmsk(mask)?)
}

fn with_path(path: &Path, e: Error) -> Error {
    Error::InFile { path: path.to_path_buf(), source: Box::new(e) }
}

/// `*.cras` files of a directory (or a single file), sorted by name.
pub fn list_rasters(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cras"))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::usage(format!("no .cras files in {}", path.display())));
    }
    Ok(out)
}

/// `dir/prefix_0007.ext` style names, zero-padded to the width of `count`.
pub fn numbered(dir: &Path, prefix: &str, index: usize, count: usize, ext: &str) -> PathBuf {
    let width = count.saturating_sub(1).max(1).to_string().len().max(4);
    dir.join(format!("{prefix}_{index:0width$}.{ext}"))
}
