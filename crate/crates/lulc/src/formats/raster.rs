//! `CRAS` rasters and `CMSK` masks.
//!
//! Both share a 12-byte header: magic (4), version `u8`, flags `u8` = 0,
//! height `u16` LE, width `u16` LE, class count `u8`, reserved `u8` = 0.
//! The payload is one byte per pixel in raster order: the class for `CRAS`,
//! 1 (observed) or 0 (missing) for `CMSK`.

use lulc_core::{CategoricalRaster, PixelMask};

use super::bytes::Reader;
use crate::error::{FormatError, Result};

pub const RASTER_MAGIC: &[u8; 4] = b"CRAS";
pub const MASK_MAGIC: &[u8; 4] = b"CMSK";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;

fn header(magic: &[u8; 4], h: usize, w: usize, k: usize, what: &'static str) -> Result<Vec<u8>> {
    let (Ok(h16), Ok(w16)) = (u16::try_from(h), u16::try_from(w)) else {
        return Err(FormatError::malformed(what, format!("{h}x{w} exceeds 65535 pixels per side")).into());
    };
    let k8 = u8::try_from(k).map_err(|_| FormatError::malformed(what, format!("{k} classes do not fit one byte")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + h * w);
    out.extend_from_slice(magic);
    out.extend_from_slice(&[VERSION, 0]);
    out.extend_from_slice(&h16.to_le_bytes());
    out.extend_from_slice(&w16.to_le_bytes());
    out.extend_from_slice(&[k8, 0]);
    Ok(out)
}

struct Header {
    height: usize,
    width: usize,
    classes: usize,
}

fn read_header<'a>(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<(Header, Reader<'a>)> {
    let mut r = Reader::new(bytes, what);
    r.magic(magic)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(FormatError::BadVersion { format: what, expected: VERSION, found: version }.into());
    }
    if r.u8()? != 0 {
        return Err(FormatError::malformed(what, "unknown flags").into());
    }
    let height = r.u16()? as usize;
    let width = r.u16()? as usize;
    let classes = r.u8()? as usize;
    if r.u8()? != 0 {
        return Err(FormatError::malformed(what, "reserved byte is not zero").into());
    }
    Ok((Header { height, width, classes }, r))
}

pub fn encode_cras(raster: &CategoricalRaster) -> Result<Vec<u8>> {
    let (h, w) = raster.dims();
    let mut out = header(RASTER_MAGIC, h, w, raster.num_classes(), "raster")?;
    out.extend_from_slice(raster.data());
    Ok(out)
}

pub fn decode_cras(bytes: &[u8]) -> Result<CategoricalRaster> {
    let (hd, mut r) = read_header(bytes, RASTER_MAGIC, "raster")?;
    let payload = r.take(hd.height * hd.width)?;
    r.finish()?;
    if let Some(pixel) = payload.iter().position(|&v| v as usize >= hd.classes) {
        return Err(FormatError::ClassOutOfRange { value: payload[pixel], classes: hd.classes, pixel }.into());
    }
    Ok(CategoricalRaster::new(hd.height, hd.width, hd.classes, payload.to_vec())?)
}

pub fn encode_cmsk(mask: &PixelMask) -> Result<Vec<u8>> {
    let (h, w) = mask.dims();
    let mut out = header(MASK_MAGIC, h, w, 2, "mask")?;
    out.extend(mask.observed().iter().map(|&o| o as u8));
    Ok(out)
}

pub fn decode_cmsk(bytes: &[u8]) -> Result<PixelMask> {
    let (hd, mut r) = read_header(bytes, MASK_MAGIC, "mask")?;
    let payload = r.take(hd.height * hd.width)?;
    r.finish()?;
    if let Some(pixel) = payload.iter().position(|&v| v > 1) {
        return Err(FormatError::ClassOutOfRange { value: payload[pixel], classes: 2, pixel }.into());
    }
    Ok(PixelMask::new(hd.height, hd.width, payload.iter().map(|&v| v == 1).collect())?)
}
