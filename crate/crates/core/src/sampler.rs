//! Ancestral sampling, inpainting and likelihood scoring.
//!
//! Pixels are visited in raster order. Observed pixels are copied from the
//! input; every missing pixel is drawn from `softmax(logits / T)` where the
//! generative network sees all pixels fixed so far. The auxiliary network
//! only reads the originally observed pixels, so its logits are computed
//! once per completion.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::grad::{Real, Tensor};
use crate::pccnn::{top_rows, Model};
use crate::raster::{CategoricalRaster, PixelMask};
use crate::rng;

/// Below this temperature a draw is the argmax, lowest class on ties.
pub const GREEDY_TEMPERATURE: f64 = 1e-4;

/// Completions generated together in one batched forward pass.
pub const DEFAULT_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    Identity,
    RandomFlips,
}

/// Horizontal and vertical mirroring; its own inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flip {
    pub horizontal: bool,
    pub vertical: bool,
}

impl Flip {
    pub fn inverse(self) -> Self {
        self
    }

    pub fn raster(self, r: &CategoricalRaster) -> CategoricalRaster {
        r.flipped(self.horizontal, self.vertical)
    }

    pub fn mask(self, m: &PixelMask) -> PixelMask {
        m.flipped(self.horizontal, self.vertical)
    }

    fn draw(policy: Orientation, rng: &mut rng::Rng) -> Self {
        match policy {
            Orientation::Identity => Self::default(),
            Orientation::RandomFlips => Self { horizontal: rng.random::<bool>(), vertical: rng.random::<bool>() },
        }
    }
}

/// Applies `policy` to an image and its mask; each flip has probability
/// one half under [`Orientation::RandomFlips`].
pub fn orient(
    image: &CategoricalRaster,
    mask: &PixelMask,
    policy: Orientation,
    seed: u64,
) -> (CategoricalRaster, PixelMask, Flip) {
    let flip = Flip::draw(policy, &mut rng::seeded(seed));
    (flip.raster(image), flip.mask(mask), flip.inverse())
}

/// `softmax(logits / T)`, computed in `f64` with the maximum subtracted.
pub fn temperature_scale(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(alloc::format!("logit {v}")));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&l| libm::exp((l - m) / temperature)).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::BadTemperature(t))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Inverse-CDF draw from normalized `probs` with `u ∈ [0,1)`.
fn draw_class(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// What to complete and how.
#[derive(Debug, Clone)]
pub struct SampleRequest<'a> {
    pub image: &'a CategoricalRaster,
    pub mask: &'a PixelMask,
    pub temperature: f64,
    pub seed: u64,
    pub count: usize,
    pub orientation: Orientation,
}

/// One completed raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub raster: CategoricalRaster,
    /// Sum of the log-probabilities (nats, tempered) of the drawn pixels.
    pub log_prob: f64,
    /// Pixels copied from the input.
    pub clamped: usize,
}

/// A raster with its log-likelihood under the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredImage {
    pub raster: CategoricalRaster,
    /// Total log-probability in nats (non-positive).
    pub nats: f64,
    pub bits_per_dim: f64,
}

impl ScoredImage {
    fn new(raster: CategoricalRaster, nats: f64) -> Self {
        let bits_per_dim = -nats / core::f64::consts::LN_2 / raster.len() as f64;
        Self { raster, nats, bits_per_dim }
    }
}

/// All `request.count` completions, in completion order.
pub fn sample<T: Real>(model: &Model<T>, request: &SampleRequest<'_>) -> Result<Vec<Completion>> {
    sample_range(model, request, 0..request.count, DEFAULT_CHUNK)
}

/// Completions with indices in `range`. Completion `i` draws from substream
/// `i` of the request seed, so any split of the index range into calls (or
/// chunk sizes) yields the same rasters.
pub fn sample_range<T: Real>(
    model: &Model<T>,
    request: &SampleRequest<'_>,
    range: core::ops::Range<usize>,
    chunk: usize,
) -> Result<Vec<Completion>> {
    check_temperature(request.temperature)?;
    if request.count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    if range.end > request.count {
        return Err(Error::invalid("completion range exceeds the request count"));
    }
    // Validates sizes and class count.
    model.encode(&[(request.image, request.mask)])?;
    let indices: Vec<usize> = range.collect();
    let mut out = Vec::with_capacity(indices.len());
    for part in indices.chunks(chunk.max(1)) {
        out.extend(sample_chunk(model, request, part)?);
    }
    Ok(out)
}

struct Slot {
    rng: rng::Rng,
    flip: Flip,
    raster: CategoricalRaster,
    mask: PixelMask,
    log_prob: f64,
}

fn sample_chunk<T: Real>(model: &Model<T>, request: &SampleRequest<'_>, indices: &[usize]) -> Result<Vec<Completion>> {
    let cfg = model.config();
    let (n, k) = (cfg.image_size, cfg.num_classes);
    let c = cfg.input_channels();
    let plane = n * n;
    let mut slots: Vec<Slot> = indices
        .iter()
        .map(|&i| {
            let mut rng = rng::substream(request.seed, i as u64);
            let flip = Flip::draw(request.orientation, &mut rng);
            Slot { rng, flip, raster: flip.raster(request.image), mask: flip.mask(request.mask), log_prob: 0.0 }
        })
        .collect();
    let pairs: Vec<_> = slots.iter().map(|s| (&s.raster, &s.mask)).collect();
    let (mut gen, aux) = model.encode(&pairs)?;
    // Missing pixels start unknown to the generative network.
    for (b, s) in slots.iter().enumerate() {
        for (p, &obs) in s.mask.observed().iter().enumerate() {
            if !obs {
                for ch in 0..k {
                    gen.data_mut()[(b * c + ch) * plane + p] = T::zero();
                }
            }
        }
    }
    let aux_logits = model.aux_logits(aux)?;
    let mut logits = vec![0.0f64; k];
    for p in 0..plane {
        let (y, x) = (p / n, p % n);
        let active: Vec<usize> = (0..slots.len()).filter(|&b| !slots[b].mask.observed()[p]).collect();
        if active.is_empty() {
            continue;
        }
        let rows = y + 1;
        let mut sub = Vec::with_capacity(active.len() * c * rows * n);
        let top = top_rows(&gen, rows)?;
        let block = c * rows * n;
        for &b in &active {
            sub.extend_from_slice(&top.data()[b * block..(b + 1) * block]);
        }
        let gl = model.gen_logits(Tensor::new(&[active.len(), c, rows, n], sub)?)?;
        for (a, &b) in active.iter().enumerate() {
            for (ch, l) in logits.iter_mut().enumerate() {
                *l = (gl.data()[(a * k + ch) * rows * n + y * n + x] + aux_logits.data()[(b * k + ch) * plane + p])
                    .as_f64();
            }
            let probs = temperature_scale(&logits, request.temperature)?;
            let slot = &mut slots[b];
            let class = if request.temperature < GREEDY_TEMPERATURE {
                argmax(&logits)
            } else {
                draw_class(&probs, slot.rng.random::<f64>())
            };
            slot.log_prob += libm::log(probs[class]);
            slot.raster.set(y, x, class as u8);
            gen.data_mut()[(b * c + class) * plane + p] = T::one();
        }
    }
    let clamped = request.mask.observed().iter().filter(|&&o| o).count();
    Ok(slots
        .into_iter()
        .map(|s| Completion { raster: s.flip.inverse().raster(&s.raster), log_prob: s.log_prob, clamped })
        .collect())
}

/// A model and orientation policy usable wherever completions are drawn
/// generically, e.g. coverage evaluation.
#[derive(Clone, Copy)]
pub struct ModelSampler<'a, T: Real = f32> {
    pub model: &'a Model<T>,
    pub orientation: Orientation,
}

impl<T: Real> crate::landstat::CompletionSampler for ModelSampler<'_, T> {
    fn complete(
        &self,
        image: &CategoricalRaster,
        mask: &PixelMask,
        count: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<CategoricalRaster>> {
        let request = SampleRequest { image, mask, temperature, seed, count, orientation: self.orientation };
        Ok(sample(self.model, &request)?.into_iter().map(|c| c.raster).collect())
    }
}

/// Log-likelihood of `raster` by the chain rule: the auxiliary network sees
/// a fully missing mask, the generative network the true predecessors.
pub fn score<T: Real>(model: &Model<T>, raster: &CategoricalRaster) -> Result<ScoredImage> {
    let (h, w) = raster.dims();
    let mask = PixelMask::all_missing(h, w);
    let logits = model.forward_batch(&[(raster, &mask)], crate::pccnn::Mode::Eval)?;
    let k = model.config().num_classes;
    let plane = h * w;
    let mut total = 0.0;
    let mut row = vec![0.0f64; k];
    for (p, &class) in raster.data().iter().enumerate() {
        for (ch, r) in row.iter_mut().enumerate() {
            *r = logits.data()[ch * plane + p].as_f64();
        }
        total += row[class as usize] - crate::grad::log_sum_exp(&row);
    }
    Ok(ScoredImage::new(raster.clone(), total))
}

/// [`score`] evaluated one pixel at a time, each pass seeing only the
/// pixels before it; a reference for the single-pass version.
pub fn score_sequential<T: Real>(model: &Model<T>, raster: &CategoricalRaster) -> Result<ScoredImage> {
    let (h, w) = raster.dims();
    let mask = PixelMask::all_missing(h, w);
    let (full, aux) = model.encode(&[(raster, &mask)])?;
    let aux_logits = model.aux_logits(aux)?;
    let k = model.config().num_classes;
    let plane = h * w;
    let mut total = 0.0;
    let mut row = vec![0.0f64; k];
    for p in 0..plane {
        let mut input = full.clone();
        for ch in 0..k {
            for q in p..plane {
                input.data_mut()[ch * plane + q] = T::zero();
            }
        }
        let gl = model.gen_logits(input)?;
        for (ch, r) in row.iter_mut().enumerate() {
            *r = (gl.data()[ch * plane + p] + aux_logits.data()[ch * plane + p]).as_f64();
        }
        total += row[raster.data()[p] as usize] - crate::grad::log_sum_exp(&row);
    }
    Ok(ScoredImage::new(raster.clone(), total))
}

#[cfg(test)]
mod tests;
