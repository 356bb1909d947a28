use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{col2im, im2col, ConvGeom};
use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Batch-norm variance floor.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// How [`Tape::batch_norm`] normalizes.
#[derive(Debug, Clone, Copy)]
pub enum BatchNormMode<'a, T> {
    /// Normalize with the statistics of this batch.
    Train,
    /// Normalize with fixed running statistics.
    Eval { mean: &'a [T], var: &'a [T] },
}

/// Per-channel statistics of one training batch; `var` is unbiased.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Running statistics for a standalone batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    stats: Option<(Vec<T>, Vec<T>)>,
    channels: usize,
}

impl<T: Real> RunningStats<T> {
    pub fn uninitialized(channels: usize) -> Self {
        Self { stats: None, channels }
    }

    /// Mean 0, variance 1.
    pub fn identity(channels: usize) -> Self {
        Self { stats: Some((vec![T::zero(); channels], vec![T::one(); channels])), channels }
    }

    pub fn eval_mode(&self) -> Result<BatchNormMode<'_, T>> {
        match &self.stats {
            Some((mean, var)) => Ok(BatchNormMode::Eval { mean, var }),
            None => Err(Error::UninitializedRunningStats),
        }
    }

    /// Exponential moving average update, `new = (1-m)·old + m·batch`.
    pub fn update(&mut self, batch: &BatchStats, momentum: f64) {
        let (mean, var) = self
            .stats
            .get_or_insert_with(|| (vec![T::zero(); self.channels], vec![T::one(); self.channels]));
        blend(mean, &batch.mean, momentum);
        blend(var, &batch.var, momentum);
    }
}

pub(crate) fn blend<T: Real>(running: &mut [T], batch: &[f64], momentum: f64) {
    for (r, &b) in running.iter_mut().zip(batch) {
        *r = T::from_f64((1.0 - momentum) * r.as_f64() + momentum * b);
    }
}

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, b: Option<Var>, mask: Option<Tensor<T>>, weff: Tensor<T> },
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gated { a: Var, b: Var, ta: Vec<T>, sb: Vec<T> },
    SliceChannels { x: Var, start: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    GlobalAvgPool(Var),
    ChannelScale { x: Var, s: Var },
    Sum(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order; [`Tape::backward`] walks it once from the end.
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
    leaves_finite: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), leaves_finite: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        self.nodes.get(v.0).ok_or_else(|| Error::Graph(format!("unknown variable {}", v.0)))
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        if cfg!(debug_assertions) {
            if matches!(op, Op::Leaf | Op::Param(_)) {
                self.leaves_finite &= value.all_finite();
            } else {
                debug_assert!(!self.leaves_finite || value.all_finite(), "non-finite output from finite inputs");
            }
        }
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Sign of every ReLU input on the tape, in recording order.
    ///
    /// Two evaluations with equal patterns lie on the same smooth piece of
    /// the graph, which is what a finite-difference oracle needs.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.nodes[x.0].value.data().iter().map(|v| *v > T::zero()));
            }
        }
        out
    }

    /// A value that is not differentiated.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, true)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(Op::Param(id), store.get(id).clone(), true)
    }

    /// Stride-1 convolution with zero same-padding. `x` is `[N,C,H,W]`,
    /// `w` is `[F,C,kh,kw]` with odd kernel sizes, `b` is `[F]`. With a mask
    /// the effective kernel is `w ⊙ mask`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, mask: Option<&Tensor<T>>) -> Result<Var> {
        let (n, c, h, wd) = self.node(x)?.value.dims4("conv2d input")?;
        let (f, wc, kh, kw) = self.node(w)?.value.dims4("conv2d weight")?;
        if wc != c {
            return Err(Error::shape("conv2d", format!("input has {c} channels, weight expects {wc}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape("conv2d", format!("kernel {kh}x{kw} must be odd")));
        }
        if let Some(b) = b {
            if self.node(b)?.value.shape() != [f] {
                return Err(Error::shape("conv2d", "bias must have one entry per filter"));
            }
        }
        if let Some(m) = mask {
            if m.shape() != self.value(w).shape() {
                return Err(Error::shape("conv2d", "mask shape must equal weight shape"));
            }
        }
        let wv = &self.value(w);
        let weff = match mask {
            Some(m) => Tensor::new(
                wv.shape(),
                wv.data().iter().zip(m.data()).map(|(&a, &b)| a * b).collect(),
            )?,
            None => (*wv).clone(),
        };
        let g = ConvGeom { c, h, w: wd, kh, kw };
        let (rows, hw) = (g.rows(), g.cols());
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * f * hw];
        let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * hw] };
        for i in 0..n {
            let xi = &xv[i * c * hw..(i + 1) * c * hw];
            let oi = &mut out[i * f * hw..(i + 1) * f * hw];
            if g.is_pointwise() {
                T::gemm(false, false, f, hw, c, T::one(), weff.data(), xi, T::zero(), oi);
            } else {
                im2col(&g, xi, &mut col);
                T::gemm(false, false, f, hw, rows, T::one(), weff.data(), &col, T::zero(), oi);
            }
            if let Some(b) = b {
                for (fi, &bv) in self.value(b).data().iter().enumerate() {
                    oi[fi * hw..(fi + 1) * hw].iter_mut().for_each(|o| *o = *o + bv);
                }
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.grad_of(&deps);
        let value = Tensor::new(&[n, f, h, wd], out)?;
        Ok(self.push(Op::Conv2d { x, w, b, mask: mask.cloned(), weff }, value, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.node(a)?.value.shape(), self.node(b)?.value.shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(va.shape(), data)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(va.shape(), data)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.node(x)?.value.map(|v| v.max(T::zero()));
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::Relu(x), value, rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.node(x)?.value.map(sigmoid);
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::Sigmoid(x), value, rg))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.node(x)?.value.map(|v| v.tanh());
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::Tanh(x), value, rg))
    }

    /// `tanh(a) ⊙ sigmoid(b)`.
    pub fn gated(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("gated", a, b)?;
        let ta: Vec<T> = self.value(a).data().iter().map(|v| v.tanh()).collect();
        let sb: Vec<T> = self.value(b).data().iter().map(|&v| sigmoid(v)).collect();
        let data = ta.iter().zip(&sb).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(Op::Gated { a, b, ta, sb }, value, rg))
    }

    /// Channels `start..start+len` of an `[N,C,H,W]` tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, c, h, w) = self.node(x)?.value.dims4("slice_channels")?;
        if start + len > c || len == 0 {
            return Err(Error::shape("slice_channels", format!("{start}+{len} of {c} channels")));
        }
        let hw = h * w;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n * len * hw);
        for i in 0..n {
            data.extend_from_slice(&src[(i * c + start) * hw..(i * c + start + len) * hw]);
        }
        let value = Tensor::new(&[n, len, h, w], data)?;
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::SliceChannels { x, start }, value, rg))
    }

    /// Per-channel normalization over batch and spatial positions, followed
    /// by the affine map `gamma · x̂ + beta`. In training mode also returns
    /// the batch statistics for the caller's running averages.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_, T>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (n, c, h, w) = self.node(x)?.value.dims4("batch_norm")?;
        for p in [gamma, beta] {
            if self.node(p)?.value.shape() != [c] {
                return Err(Error::shape("batch_norm", "gamma and beta need one entry per channel"));
            }
        }
        let hw = h * w;
        let count = n * hw;
        let xv = self.value(x).data();
        let (mean, var, stats) = match mode {
            BatchNormMode::Train => {
                if count < 2 {
                    return Err(Error::shape("batch_norm", "training needs at least 2 values per channel"));
                }
                let mut mean = vec![0.0f64; c];
                let mut var = vec![0.0f64; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += xv[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let m = s / count as f64;
                    let mut ss = 0.0;
                    for i in 0..n {
                        ss += xv[(i * c + ch) * hw..(i * c + ch + 1) * hw]
                            .iter()
                            .map(|v| (v.as_f64() - m) * (v.as_f64() - m))
                            .sum::<f64>();
                    }
                    mean[ch] = m;
                    var[ch] = ss / count as f64;
                }
                let unbiased = var.iter().map(|v| v * count as f64 / (count - 1) as f64).collect();
                let stats = BatchStats { mean: mean.clone(), var: unbiased };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::shape("batch_norm", "running statistics have the wrong length"));
                }
                (mean.iter().map(|v| v.as_f64()).collect(), var.iter().map(|v| v.as_f64()).collect(), None)
            }
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::from_f64(1.0 / libm::sqrt(v + BN_EPS))).collect();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xv.len()];
        let mut out = vec![T::zero(); xv.len()];
        for i in 0..n {
            for ch in 0..c {
                let m = T::from_f64(mean[ch]);
                let range = (i * c + ch) * hw..(i * c + ch + 1) * hw;
                for j in range {
                    let xh = (xv[j] - m) * inv_std[ch];
                    xhat[j] = xh;
                    out[j] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let value = Tensor::new(&[n, c, h, w], out)?;
        let rg = self.grad_of(&[x, gamma, beta]);
        let train = stats.is_some();
        Ok((self.push(Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, value, rg), stats))
    }

    /// Mean over spatial positions: `[N,C,H,W] -> [N,C,1,1]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.node(x)?.value.dims4("global_avg_pool")?;
        let hw = h * w;
        let data = self
            .value(x)
            .data()
            .chunks(hw)
            .map(|p| T::from_f64(p.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64))
            .collect();
        let value = Tensor::new(&[n, c, 1, 1], data)?;
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::GlobalAvgPool(x), value, rg))
    }

    /// Scales each channel of `x` (`[N,C,H,W]`) by `s` (`[N,C,1,1]`).
    pub fn channel_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let (n, c, h, w) = self.node(x)?.value.dims4("channel_scale")?;
        if self.node(s)?.value.shape() != [n, c, 1, 1] {
            return Err(Error::shape("channel_scale", "scale must be [N,C,1,1]"));
        }
        let hw = h * w;
        let sv = self.value(s).data();
        let data = self
            .value(x)
            .data()
            .chunks(hw)
            .zip(sv)
            .flat_map(|(p, &k)| p.iter().map(move |&v| v * k))
            .collect();
        let value = Tensor::new(&[n, c, h, w], data)?;
        let rg = self.grad_of(&[x, s]);
        Ok(self.push(Op::ChannelScale { x, s }, value, rg))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.node(x)?.value.data().iter().map(|v| v.as_f64()).sum::<f64>();
        let rg = self.grad_of(&[x]);
        Ok(self.push(Op::Sum(x), Tensor::scalar(T::from_f64(total)), rg))
    }

    /// Mean negative log-likelihood of `targets` under `softmax(logits)`
    /// along the class axis. `logits` is `[N,K]` or `[N,K,H,W]`; targets are
    /// ordered by (n, h, w).
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let shape = self.node(logits)?.value.shape().to_vec();
        let (n, k, hw) = match *shape.as_slice() {
            [n, k] => (n, k, 1),
            [n, k, h, w] => (n, k, h * w),
            _ => return Err(Error::shape("softmax_cross_entropy", format!("logits {shape:?}"))),
        };
        if targets.len() != n * hw {
            return Err(Error::shape("softmax_cross_entropy", format!("{} targets for {} rows", targets.len(), n * hw)));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::invalid(format!("target {t} out of range for {k} classes")));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); lv.len()];
        let mut total = 0.0f64;
        let mut row = vec![0.0f64; k];
        for i in 0..n {
            for p in 0..hw {
                for (kk, r) in row.iter_mut().enumerate() {
                    *r = lv[(i * k + kk) * hw + p].as_f64();
                }
                let lse = log_sum_exp(&row);
                total += lse - row[targets[i * hw + p]];
                for kk in 0..k {
                    probs[(i * k + kk) * hw + p] = T::from_f64(libm::exp(row[kk] - lse));
                }
            }
        }
        let loss = total / (n * hw) as f64;
        let rg = self.grad_of(&[logits]);
        Ok(self.push(
            Op::SoftmaxCrossEntropy { logits, targets: targets.to_vec(), probs },
            Tensor::scalar(T::from_f64(loss)),
            rg,
        ))
    }

    /// Reverse-mode gradients of the scalar `loss` with respect to every
    /// node that requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.node(loss)?;
        if root.value.numel() != 1 {
            return Err(Error::shape("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape(), T::one()));
        for idx in (0..=loss.0).rev() {
            let (before, rest) = grads.split_at_mut(idx);
            let Some(g) = rest[0].as_ref() else { continue };
            let node = &self.nodes[idx];
            let mut acc = Acc { grads: before, nodes: &self.nodes, idx };
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::Conv2d { x, w, b, mask, weff } => {
                    self.conv_backward(&mut acc, g, *x, *w, *b, mask.as_ref(), weff)?;
                }
                Op::Add(a, b) => {
                    acc.add(*a, || Ok(g.clone()))?;
                    acc.add(*b, || Ok(g.clone()))?;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc.add(*a, || zip_map(g, vb, |d, y| d * y))?;
                    acc.add(*b, || zip_map(g, va, |d, x| d * x))?;
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    acc.add(*x, || zip_map(g, xv, |d, v| if v > T::zero() { d } else { T::zero() }))?;
                }
                Op::Sigmoid(x) => {
                    acc.add(*x, || zip_map(g, &node.value, |d, y| d * y * (T::one() - y)))?;
                }
                Op::Tanh(x) => {
                    acc.add(*x, || zip_map(g, &node.value, |d, y| d * (T::one() - y * y)))?;
                }
                Op::Gated { a, b, ta, sb } => {
                    acc.add(*a, || {
                        let data = (0..ta.len()).map(|i| g.data()[i] * sb[i] * (T::one() - ta[i] * ta[i])).collect();
                        Tensor::new(g.shape(), data)
                    })?;
                    acc.add(*b, || {
                        let data = (0..ta.len()).map(|i| g.data()[i] * ta[i] * sb[i] * (T::one() - sb[i])).collect();
                        Tensor::new(g.shape(), data)
                    })?;
                }
                Op::SliceChannels { x, start } => {
                    let (n, c, h, w) = self.value(*x).dims4("slice_channels")?;
                    let len = g.shape()[1];
                    let hw = h * w;
                    acc.add(*x, || {
                        let mut d = Tensor::zeros(&[n, c, h, w]);
                        for i in 0..n {
                            d.data_mut()[(i * c + start) * hw..(i * c + start + len) * hw]
                                .copy_from_slice(&g.data()[i * len * hw..(i + 1) * len * hw]);
                        }
                        Ok(d)
                    })?;
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                    let (n, c, h, w) = g.dims4("batch_norm")?;
                    let hw = h * w;
                    let count = (n * hw) as f64;
                    let gd = g.data();
                    let gv = self.value(*gamma).data();
                    let mut dgamma = vec![0.0f64; c];
                    let mut dbeta = vec![0.0f64; c];
                    for i in 0..n {
                        for ch in 0..c {
                            for j in (i * c + ch) * hw..(i * c + ch + 1) * hw {
                                dgamma[ch] += (gd[j] * xhat[j]).as_f64();
                                dbeta[ch] += gd[j].as_f64();
                            }
                        }
                    }
                    acc.add(*x, || {
                        let mut dx = vec![T::zero(); gd.len()];
                        for i in 0..n {
                            for ch in 0..c {
                                let scale = gv[ch] * inv_std[ch];
                                for j in (i * c + ch) * hw..(i * c + ch + 1) * hw {
                                    dx[j] = if *train {
                                        // dx̂ = g·γ; dx = (dx̂ − mean(dx̂) − x̂·mean(dx̂·x̂))/σ
                                        let mdx = T::from_f64(dbeta[ch] / count);
                                        let mdxx = T::from_f64(dgamma[ch] / count);
                                        scale * (gd[j] - mdx - xhat[j] * mdxx)
                                    } else {
                                        scale * gd[j]
                                    };
                                }
                            }
                        }
                        Tensor::new(g.shape(), dx)
                    })?;
                    acc.add(*gamma, || Ok(from_f64_vec(&dgamma)))?;
                    acc.add(*beta, || Ok(from_f64_vec(&dbeta)))?;
                }
                Op::GlobalAvgPool(x) => {
                    let (n, c, h, w) = self.value(*x).dims4("global_avg_pool")?;
                    let inv = T::from_f64(1.0 / (h * w) as f64);
                    acc.add(*x, || {
                        Ok(Tensor::from_fn(&[n, c, h, w], |j| g.data()[j / (h * w)] * inv))
                    })?;
                }
                Op::ChannelScale { x, s } => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let hw = xv.numel() / sv.numel();
                    acc.add(*x, || Ok(Tensor::from_fn(xv.shape(), |j| g.data()[j] * sv.data()[j / hw])))?;
                    acc.add(*s, || {
                        let data = g
                            .data()
                            .chunks(hw)
                            .zip(xv.data().chunks(hw))
                            .map(|(gp, xp)| T::from_f64(gp.iter().zip(xp).map(|(&a, &b)| (a * b).as_f64()).sum()))
                            .collect();
                        Tensor::new(sv.shape(), data)
                    })?;
                }
                Op::Sum(x) => {
                    let gs = g.data()[0];
                    acc.add(*x, || Ok(Tensor::full(self.value(*x).shape(), gs)))?;
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let shape = self.value(*logits).shape();
                    let (k, hw) = (shape[1], shape.get(2).map_or(1, |h| h * shape[3]));
                    let scale = g.data()[0] / T::from_f64(targets.len() as f64);
                    acc.add(*logits, || {
                        let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                        for (row, &t) in targets.iter().enumerate() {
                            let (i, p) = (row / hw, row % hw);
                            let j = (i * k + t) * hw + p;
                            d[j] = d[j] - scale;
                        }
                        Tensor::new(shape, d)
                    })?;
                }
            }
        }
        let params = self
            .nodes
            .iter()
            .map(|n| match n.op {
                Op::Param(id) => Some(id),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        acc: &mut Acc<'_, T>,
        g: &Tensor<T>,
        x: Var,
        w: Var,
        b: Option<Var>,
        mask: Option<&Tensor<T>>,
        weff: &Tensor<T>,
    ) -> Result<()> {
        let (n, c, h, wd) = self.value(x).dims4("conv2d input")?;
        let (f, _, kh, kw) = weff.dims4("conv2d weight")?;
        let geom = ConvGeom { c, h, w: wd, kh, kw };
        let (rows, hw) = (geom.rows(), geom.cols());
        let xv = self.value(x).data();
        let gd = g.data();
        let need_x = self.nodes[x.0].requires_grad;
        let need_w = self.nodes[w.0].requires_grad;
        let mut dweff = vec![T::zero(); f * rows];
        let mut dx = if need_x { vec![T::zero(); xv.len()] } else { Vec::new() };
        let mut col = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * hw] };
        let mut dcol = col.clone();
        for i in 0..n {
            let gi = &gd[i * f * hw..(i + 1) * f * hw];
            let xi = &xv[i * c * hw..(i + 1) * c * hw];
            if geom.is_pointwise() {
                if need_w {
                    T::gemm(false, true, f, c, hw, T::one(), gi, xi, T::one(), &mut dweff);
                }
                if need_x {
                    let dxi = &mut dx[i * c * hw..(i + 1) * c * hw];
                    T::gemm(true, false, c, hw, f, T::one(), weff.data(), gi, T::zero(), dxi);
                }
            } else {
                if need_w {
                    im2col(&geom, xi, &mut col);
                    T::gemm(false, true, f, rows, hw, T::one(), gi, &col, T::one(), &mut dweff);
                }
                if need_x {
                    T::gemm(true, false, rows, hw, f, T::one(), weff.data(), gi, T::zero(), &mut dcol);
                    col2im(&geom, &dcol, &mut dx[i * c * hw..(i + 1) * c * hw]);
                }
            }
        }
        if need_x {
            acc.add(x, || Tensor::new(&[n, c, h, wd], dx))?;
        }
        if need_w {
            if let Some(m) = mask {
                for (d, &mv) in dweff.iter_mut().zip(m.data()) {
                    *d = *d * mv;
                }
            }
            acc.add(w, || Tensor::new(weff.shape(), dweff))?;
        }
        if let Some(b) = b {
            acc.add(b, || {
                let mut db = vec![0.0f64; f];
                for i in 0..n {
                    for (fi, d) in db.iter_mut().enumerate() {
                        *d += gd[(i * f + fi) * hw..(i * f + fi + 1) * hw].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
                Ok(from_f64_vec(&db))
            })?;
        }
        Ok(())
    }
}

struct Acc<'a, T> {
    grads: &'a mut [Option<Tensor<T>>],
    nodes: &'a [Node<T>],
    idx: usize,
}

impl<T: Real> Acc<'_, T> {
    /// Adds the lazily computed contribution to `target`'s gradient.
    fn add(&mut self, target: Var, f: impl FnOnce() -> Result<Tensor<T>>) -> Result<()> {
        if target.0 >= self.idx {
            return Err(Error::Graph(format!("node {} depends on later node {}", self.idx, target.0)));
        }
        if !self.nodes[target.0].requires_grad {
            return Ok(());
        }
        let contrib = f()?;
        match &mut self.grads[target.0] {
            Some(existing) => existing.add_assign(&contrib),
            slot @ None => *slot = Some(contrib),
        }
        Ok(())
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<Option<ParamId>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// One gradient per store entry; zero for parameters off the loss path.
    pub fn for_params(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = store.entries().iter().map(|e| Tensor::zeros(e.value.shape())).collect();
        for (g, p) in self.grads.iter().zip(&self.params) {
            if let (Some(g), Some(id)) = (g, p) {
                out[id.0].add_assign(g);
            }
        }
        out
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + libm::log(row.iter().map(|&v| libm::exp(v - m)).sum::<f64>())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
    Tensor::new(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}

fn from_f64_vec<T: Real>(v: &[f64]) -> Tensor<T> {
    Tensor::from_fn(&[v.len()], |i| T::from_f64(v[i]))
}
