use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::config::ModelConfig;
use super::masks::{horizontal_mask, vertical_mask, MaskType};
use crate::error::{Error, Result};
use crate::grad::{blend, BatchNormMode, BatchStats, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::raster::{CategoricalRaster, PixelMask};
use crate::rng;

/// Whether batch normalization uses batch or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Mean negative log-likelihood per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll {
    pub nats: f64,
}

impl Nll {
    pub fn bits_per_dim(&self) -> f64 {
        self.nats / core::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct GatedBlock {
    vertical: Conv,
    horizontal: Conv,
    v_to_h: Conv,
    out: Conv,
}

#[derive(Debug, Clone, Copy)]
struct ResidualBlock {
    conv1: Conv,
    norm1: Norm,
    conv2: Conv,
    norm2: Norm,
    squeeze: Conv,
    excite: Conv,
}

#[derive(Clone)]
struct KernelMasks<T> {
    vertical_first: Tensor<T>,
    horizontal_first: Tensor<T>,
    vertical: Tensor<T>,
    horizontal: Tensor<T>,
}

/// The pixel-constrained network: logits are `f_gen(x) + f_aux(x̃)`.
///
/// `f_gen` is a stack of gated blocks with a vertical and a horizontal
/// masked stream, so its logit at a pixel only depends on pixels before it in
/// raster order. `f_aux` is an unmasked residual network over the observed
/// pixels. Batch-norm running statistics are stored as non-trainable
/// entries of the parameter store.
#[derive(Clone)]
pub struct Model<T: Real = f32> {
    config: ModelConfig,
    params: ParamStore<T>,
    gated: Vec<GatedBlock>,
    gen_norm: Norm,
    gen_head: Conv,
    aux_stem: Conv,
    aux_stem_norm: Norm,
    residual: Vec<ResidualBlock>,
    aux_head: Conv,
    masks: KernelMasks<T>,
}

impl<T: Real> core::fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Model").field("config", &self.config).field("params", &self.params.len()).finish()
    }
}

/// Equal configuration and parameter values; the layer wiring follows from
/// the configuration.
impl<T: Real> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Batch statistics of every batch-norm layer from one training forward,
/// keyed by the running-mean/variance entries they update.
pub struct NormUpdates(Vec<(ParamId, ParamId, BatchStats)>);

struct Builder<'a, T: Real> {
    store: ParamStore<T>,
    rng: &'a mut rng::Rng,
}

impl<T: Real> Builder<'_, T> {
    fn conv(&mut self, name: &str, out: usize, cin: usize, kh: usize, kw: usize) -> Conv {
        let bound = 1.0 / libm::sqrt((cin * kh * kw) as f64);
        let rng = &mut *self.rng;
        let w = Tensor::from_fn(&[out, cin, kh, kw], |_| T::from_f64(rng.random_range(-bound..bound)));
        Conv {
            w: self.store.add(format!("{name}.weight"), w, true),
            b: self.store.add(format!("{name}.bias"), Tensor::zeros(&[out]), true),
        }
    }

    fn norm(&mut self, name: &str, channels: usize) -> Norm {
        Norm {
            gamma: self.store.add(format!("{name}.gamma"), Tensor::full(&[channels], T::one()), true),
            beta: self.store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            mean: self.store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false),
            var: self.store.add(format!("{name}.running_var"), Tensor::full(&[channels], T::one()), false),
        }
    }
}

impl<T: Real> Model<T> {
    /// Fresh model: weights uniform in ±1/√fan_in, biases zero, batch norm
    /// at identity.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(seed);
        let mut b = Builder { store: ParamStore::new(), rng: &mut rng };
        let (f, k, cin, classes) = (config.filters, config.kernel_size, config.input_channels(), config.num_classes);
        let gated = (0..config.num_gated_blocks)
            .map(|i| {
                let c = if i == 0 { cin } else { f };
                GatedBlock {
                    vertical: b.conv(&format!("gen.block{i}.vertical"), 2 * f, c, k, k),
                    horizontal: b.conv(&format!("gen.block{i}.horizontal"), 2 * f, c, 1, k),
                    v_to_h: b.conv(&format!("gen.block{i}.v_to_h"), 2 * f, 2 * f, 1, 1),
                    out: b.conv(&format!("gen.block{i}.out"), f, f, 1, 1),
                }
            })
            .collect();
        let gen_norm = b.norm("gen.head.norm", f);
        let gen_head = b.conv("gen.head.conv", classes, f, 1, 1);
        let a = config.aux_filters;
        let s = config.se_hidden();
        let aux_stem = b.conv("aux.stem.conv", a, cin, k, k);
        let aux_stem_norm = b.norm("aux.stem.norm", a);
        let residual = (0..config.aux_residual_blocks)
            .map(|i| ResidualBlock {
                conv1: b.conv(&format!("aux.block{i}.conv1"), a, a, k, k),
                norm1: b.norm(&format!("aux.block{i}.norm1"), a),
                conv2: b.conv(&format!("aux.block{i}.conv2"), a, a, k, k),
                norm2: b.norm(&format!("aux.block{i}.norm2"), a),
                squeeze: b.conv(&format!("aux.block{i}.squeeze"), s, a, 1, 1),
                excite: b.conv(&format!("aux.block{i}.excite"), a, s, 1, 1),
            })
            .collect();
        let aux_head = b.conv("aux.head.conv", classes, a, 1, 1);
        let params = b.store;
        let masks = KernelMasks {
            vertical_first: vertical_mask(2 * f, cin, k, MaskType::A),
            horizontal_first: horizontal_mask(2 * f, cin, k, MaskType::A),
            vertical: vertical_mask(2 * f, f, k, MaskType::B),
            horizontal: horizontal_mask(2 * f, f, k, MaskType::B),
        };
        Ok(Self { config, params, gated, gen_norm, gen_head, aux_stem, aux_stem_norm, residual, aux_head, masks })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let mut out = Model::<U>::new(self.config.clone(), 0).expect("validated config");
        out.params = self.params.cast();
        out
    }

    /// Total trainable scalars in the registry.
    pub fn trainable_count(&self) -> usize {
        self.params.trainable_count()
    }

    fn check_input(&self, image: &CategoricalRaster, mask: &PixelMask) -> Result<()> {
        let n = self.config.image_size;
        if image.dims() != (n, n) {
            return Err(Error::DimensionMismatch { expected: (n, n), actual: image.dims() });
        }
        if mask.dims() != (n, n) {
            return Err(Error::DimensionMismatch { expected: (n, n), actual: mask.dims() });
        }
        if image.num_classes() != self.config.num_classes {
            return Err(Error::invalid(format!(
                "raster has {} classes, model expects {}",
                image.num_classes(),
                self.config.num_classes
            )));
        }
        Ok(())
    }

    /// `[N, K+1, H, W]` input tensors for both networks.
    ///
    /// The generative input one-hot encodes every pixel (causal masking keeps
    /// later pixels invisible); the auxiliary input zeroes the one-hot block
    /// at missing pixels. Channel `K` holds 1 at observed pixels.
    pub fn encode(&self, batch: &[(&CategoricalRaster, &PixelMask)]) -> Result<(Tensor<T>, Tensor<T>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n = self.config.image_size;
        let c = self.config.input_channels();
        let plane = n * n;
        let mut gen = vec![T::zero(); batch.len() * c * plane];
        let mut aux = vec![T::zero(); batch.len() * c * plane];
        for (i, (image, mask)) in batch.iter().enumerate() {
            self.check_input(image, mask)?;
            let base = i * c * plane;
            for (p, (&class, &obs)) in image.data().iter().zip(mask.observed()).enumerate() {
                gen[base + class as usize * plane + p] = T::one();
                if obs {
                    aux[base + class as usize * plane + p] = T::one();
                    gen[base + (c - 1) * plane + p] = T::one();
                    aux[base + (c - 1) * plane + p] = T::one();
                }
            }
        }
        let shape = [batch.len(), c, n, n];
        Ok((Tensor::new(&shape, gen)?, Tensor::new(&shape, aux)?))
    }

    fn param_vars(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.ids().map(|id| tape.param(&self.params, id)).collect()
    }

    fn conv(&self, tape: &mut Tape<T>, p: &[Var], x: Var, c: Conv, mask: Option<&Tensor<T>>) -> Result<Var> {
        tape.conv2d(x, p[c.w.index()], Some(p[c.b.index()]), mask)
    }

    fn norm(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
        n: Norm,
        mode: Mode,
        updates: &mut Vec<(ParamId, ParamId, BatchStats)>,
    ) -> Result<Var> {
        let bn_mode = match mode {
            Mode::Train => BatchNormMode::Train,
            Mode::Eval => BatchNormMode::Eval {
                mean: self.params.get(n.mean).data(),
                var: self.params.get(n.var).data(),
            },
        };
        let (y, stats) = tape.batch_norm(x, p[n.gamma.index()], p[n.beta.index()], bn_mode)?;
        if let Some(stats) = stats {
            updates.push((n.mean, n.var, stats));
        }
        Ok(y)
    }

    /// Autoregressive logits `[N, K, H, W]`; any spatial size works.
    fn gen_graph(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        input: Var,
        mode: Mode,
        updates: &mut Vec<(ParamId, ParamId, BatchStats)>,
    ) -> Result<Var> {
        let f = self.config.filters;
        let (mut v, mut h) = (input, input);
        for (i, block) in self.gated.iter().enumerate() {
            let (vm, hm) = if i == 0 {
                (&self.masks.vertical_first, &self.masks.horizontal_first)
            } else {
                (&self.masks.vertical, &self.masks.horizontal)
            };
            let v_pre = self.conv(tape, p, v, block.vertical, Some(vm))?;
            let h_conv = self.conv(tape, p, h, block.horizontal, Some(hm))?;
            let link = self.conv(tape, p, v_pre, block.v_to_h, None)?;
            let h_pre = tape.add(h_conv, link)?;
            let gate = |tape: &mut Tape<T>, x: Var| -> Result<Var> {
                let a = tape.slice_channels(x, 0, f)?;
                let b = tape.slice_channels(x, f, f)?;
                tape.gated(a, b)
            };
            let v_out = gate(tape, v_pre)?;
            let h_gated = gate(tape, h_pre)?;
            let h_out = self.conv(tape, p, h_gated, block.out, None)?;
            h = if i == 0 { h_out } else { tape.add(h_out, h)? };
            v = v_out;
        }
        let x = self.norm(tape, p, h, self.gen_norm, mode, updates)?;
        let x = tape.relu(x)?;
        self.conv(tape, p, x, self.gen_head, None)
    }

    fn aux_graph(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        input: Var,
        mode: Mode,
        updates: &mut Vec<(ParamId, ParamId, BatchStats)>,
    ) -> Result<Var> {
        let x = self.conv(tape, p, input, self.aux_stem, None)?;
        let x = self.norm(tape, p, x, self.aux_stem_norm, mode, updates)?;
        let mut x = tape.relu(x)?;
        for block in &self.residual {
            let y = self.conv(tape, p, x, block.conv1, None)?;
            let y = self.norm(tape, p, y, block.norm1, mode, updates)?;
            let y = tape.relu(y)?;
            let y = self.conv(tape, p, y, block.conv2, None)?;
            let y = self.norm(tape, p, y, block.norm2, mode, updates)?;
            let s = tape.global_avg_pool(y)?;
            let s = self.conv(tape, p, s, block.squeeze, None)?;
            let s = tape.relu(s)?;
            let s = self.conv(tape, p, s, block.excite, None)?;
            let s = tape.sigmoid(s)?;
            let y = tape.channel_scale(y, s)?;
            let y = tape.add(y, x)?;
            x = tape.relu(y)?;
        }
        self.conv(tape, p, x, self.aux_head, None)
    }

    /// Records the full forward pass on `tape` and returns the summed logits
    /// together with the parameter variables (indexed like the store).
    pub fn forward_graph(
        &self,
        tape: &mut Tape<T>,
        gen_input: Tensor<T>,
        aux_input: Tensor<T>,
        mode: Mode,
    ) -> Result<(Var, Vec<Var>, NormUpdates)> {
        let p = self.param_vars(tape);
        let gi = tape.constant(gen_input);
        let ai = tape.constant(aux_input);
        let mut updates = Vec::new();
        let g = self.gen_graph(tape, &p, gi, mode, &mut updates)?;
        let a = self.aux_graph(tape, &p, ai, mode, &mut updates)?;
        let logits = tape.add(g, a)?;
        Ok((logits, p, NormUpdates(updates)))
    }

    /// Summed logits `[K, H, W]` for one image.
    pub fn forward_logits(&self, image: &CategoricalRaster, mask: &PixelMask, mode: Mode) -> Result<Tensor<T>> {
        let logits = self.forward_batch(&[(image, mask)], mode)?;
        let (_, k, h, w) = logits.dims4("forward_logits")?;
        logits.reshape(&[k, h, w])
    }

    /// Summed logits `[N, K, H, W]`.
    pub fn forward_batch(&self, batch: &[(&CategoricalRaster, &PixelMask)], mode: Mode) -> Result<Tensor<T>> {
        let (gen, aux) = self.encode(batch)?;
        let mut tape = Tape::new();
        let (logits, _, _) = self.forward_graph(&mut tape, gen, aux, mode)?;
        Ok(tape.value(logits).clone())
    }

    /// Generative-network logits `[N, K, H', W]` in eval mode for an encoded
    /// input of any height `H'`.
    pub fn gen_logits(&self, gen_input: Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p: Vec<Var> = self.params.ids().map(|id| tape.constant(self.params.get(id).clone())).collect();
        let x = tape.constant(gen_input);
        let out = self.gen_graph(&mut tape, &p, x, Mode::Eval, &mut Vec::new())?;
        Ok(tape.value(out).clone())
    }

    /// Auxiliary-network logits `[N, K, H, W]` in eval mode.
    pub fn aux_logits(&self, aux_input: Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p: Vec<Var> = self.params.ids().map(|id| tape.constant(self.params.get(id).clone())).collect();
        let x = tape.constant(aux_input);
        let out = self.aux_graph(&mut tape, &p, x, Mode::Eval, &mut Vec::new())?;
        Ok(tape.value(out).clone())
    }

    /// Mean per-pixel cross-entropy of the true classes over all pixels.
    pub fn loss(&self, batch: &[(&CategoricalRaster, &PixelMask)], mode: Mode) -> Result<Nll> {
        let (gen, aux) = self.encode(batch)?;
        let mut tape = Tape::new();
        let (logits, _, _) = self.forward_graph(&mut tape, gen, aux, mode)?;
        let loss = tape.softmax_cross_entropy(logits, &targets(batch))?;
        Ok(Nll { nats: tape.value(loss).data()[0].as_f64() })
    }

    /// Loss together with [`Tape::relu_pattern`] of the forward pass.
    pub fn loss_with_pattern(
        &self,
        batch: &[(&CategoricalRaster, &PixelMask)],
        mode: Mode,
    ) -> Result<(Nll, Vec<bool>)> {
        let (gen, aux) = self.encode(batch)?;
        let mut tape = Tape::new();
        let (logits, _, _) = self.forward_graph(&mut tape, gen, aux, mode)?;
        let loss = tape.softmax_cross_entropy(logits, &targets(batch))?;
        Ok((Nll { nats: tape.value(loss).data()[0].as_f64() }, tape.relu_pattern()))
    }

    /// Loss, one gradient per store entry, and the batch statistics for the
    /// running averages.
    pub fn loss_and_grad(
        &self,
        batch: &[(&CategoricalRaster, &PixelMask)],
        mode: Mode,
    ) -> Result<(Nll, Vec<Tensor<T>>, NormUpdates)> {
        let (gen, aux) = self.encode(batch)?;
        let mut tape = Tape::new();
        let (logits, _, updates) = self.forward_graph(&mut tape, gen, aux, mode)?;
        let loss = tape.softmax_cross_entropy(logits, &targets(batch))?;
        let nats = tape.value(loss).data()[0].as_f64();
        if !nats.is_finite() {
            return Err(Error::NonFinite(format!("training loss {nats}")));
        }
        let grads = tape.backward(loss)?.for_params(&self.params);
        Ok((Nll { nats }, grads, updates))
    }

    /// Moves each running mean/variance towards its batch statistics.
    pub fn apply_norm_updates(&mut self, updates: &NormUpdates, momentum: f64) {
        for (mean, var, stats) in &updates.0 {
            blend(self.params.get_mut(*mean).data_mut(), &stats.mean, momentum);
            blend(self.params.get_mut(*var).data_mut(), &stats.var, momentum);
        }
    }
}

fn targets(batch: &[(&CategoricalRaster, &PixelMask)]) -> Vec<usize> {
    batch.iter().flat_map(|(image, _)| image.data().iter().map(|&c| c as usize)).collect()
}

/// Rows `0..rows` of an `[N, C, H, W]` tensor.
pub(crate) fn top_rows<T: Real>(x: &Tensor<T>, rows: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("top_rows")?;
    if rows == 0 || rows > h {
        return Err(Error::shape("top_rows", format!("{rows} rows of {h}")));
    }
    let mut data = Vec::with_capacity(n * c * rows * w);
    for plane in x.data().chunks(h * w) {
        data.extend_from_slice(&plane[..rows * w]);
    }
    Tensor::new(&[n, c, rows, w], data)
}
