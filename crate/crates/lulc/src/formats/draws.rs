//! `SCCD` posterior draw tables.
//!
//! Layout: magic, version `u8`, a `u32`-length-prefixed JSON header (grid,
//! class count, chain and draw counts, and the name and shape of each block
//! of a draw), then every draw as `f64` LE, chains in order and each draw
//! as the blocks in header order.

use lulc_core::sccar::SccarParams;
use serde::{Deserialize, Serialize};

use super::bytes::{put_json, Reader};
use crate::error::{FormatError, Result};

pub const MAGIC: &[u8; 4] = b"SCCD";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub height: usize,
    pub width: usize,
    pub chains: Vec<Vec<SccarParams>>,
}

impl DrawTable {
    pub fn draws(&self) -> Vec<SccarParams> {
        self.chains.iter().flatten().cloned().collect()
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Block {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    height: usize,
    width: usize,
    classes: usize,
    chains: usize,
    draws_per_chain: usize,
    blocks: Vec<Block>,
}

fn blocks(n: usize, k: usize) -> Vec<Block> {
    [("omega", vec![n, k]), ("A", vec![k, k]), ("m", vec![k]), ("tau", vec![k]), ("rho", vec![k])]
        .into_iter()
        .map(|(name, shape)| Block { name: name.into(), shape })
        .collect()
}

pub fn encode_draws(table: &DrawTable) -> Result<Vec<u8>> {
    let n = table.height * table.width;
    let per_chain = table.chains.first().map_or(0, Vec::len);
    let k = table.chains.first().and_then(|c| c.first()).map_or(0, |p| p.k);
    if table.chains.iter().any(|c| c.len() != per_chain) || table.chains.iter().flatten().any(|p| p.n != n || p.k != k) {
        return Err(FormatError::malformed("draw table", "chains must share lengths and shapes").into());
    }
    let header = Header {
        height: table.height,
        width: table.width,
        classes: k,
        chains: table.chains.len(),
        draws_per_chain: per_chain,
        blocks: blocks(n, k),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_json(&mut out, &header);
    for p in table.chains.iter().flatten() {
        for block in [&p.omega, &p.a, &p.m, &p.tau, &p.rho] {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_draws(bytes: &[u8]) -> Result<DrawTable> {
    let what = "draw table";
    let mut r = Reader::new(bytes, what);
    r.magic(MAGIC)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(FormatError::BadVersion { format: what, expected: VERSION, found: version }.into());
    }
    let h: Header = r.json()?;
    let (n, k) = (h.height * h.width, h.classes);
    if h.blocks != blocks(n, k) {
        return Err(FormatError::malformed(what, "unexpected block layout").into());
    }
    let mut chains = Vec::with_capacity(h.chains);
    for _ in 0..h.chains {
        let mut chain = Vec::with_capacity(h.draws_per_chain);
        for _ in 0..h.draws_per_chain {
            chain.push(SccarParams {
                n,
                k,
                omega: r.f64s(n * k)?,
                a: r.f64s(k * k)?,
                m: r.f64s(k)?,
                tau: r.f64s(k)?,
                rho: r.f64s(k)?,
            });
        }
        chains.push(chain);
    }
    r.finish()?;
    Ok(DrawTable { height: h.height, width: h.width, chains })
}
