use crate::error::{Error, Result};

/// Architecture of the pixel-constrained network.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub num_classes: usize,
    pub num_gated_blocks: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub aux_residual_blocks: usize,
    pub aux_filters: usize,
    pub squeeze_excite_reduction: usize,
}

impl ModelConfig {
    /// Full-size configuration: 40×40 windows, 20 classes, 22 gated blocks
    /// of 96 filters with 5×5 kernels.
    pub fn paper() -> Self {
        Self {
            image_size: 40,
            num_classes: 20,
            num_gated_blocks: 22,
            filters: 96,
            kernel_size: 5,
            aux_residual_blocks: 12,
            aux_filters: 96,
            squeeze_excite_reduction: 16,
        }
    }

    /// CPU-sized default.
    pub fn desk() -> Self {
        Self {
            image_size: 16,
            num_classes: 5,
            num_gated_blocks: 6,
            filters: 32,
            kernel_size: 3,
            aux_residual_blocks: 4,
            aux_filters: 32,
            squeeze_excite_reduction: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(alloc::format!("model config: {m}")));
        if self.kernel_size.is_multiple_of(2) {
            return fail("kernel_size must be odd");
        }
        if self.filters == 0 || !self.filters.is_multiple_of(2) {
            return fail("filters must be positive and even");
        }
        if !(2..=256).contains(&self.num_classes) {
            return fail("num_classes must be in 2..=256");
        }
        if self.num_gated_blocks == 0 {
            return fail("need at least one gated block");
        }
        if self.image_size == 0 || self.aux_filters == 0 || self.squeeze_excite_reduction == 0 {
            return fail("sizes must be positive");
        }
        Ok(())
    }

    /// Input channels: one-hot classes plus the mask channel.
    pub fn input_channels(&self) -> usize {
        self.num_classes + 1
    }

    pub fn se_hidden(&self) -> usize {
        (self.aux_filters / self.squeeze_excite_reduction).max(1)
    }
}

/// Trainable parameter counts per sub-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub gen: usize,
    pub aux: usize,
    pub total: usize,
}

/// Counts trainable parameters from the layer plan alone.
///
/// Masked kernels are stored at full size, so masked-out weights count.
pub fn count_params(config: &ModelConfig) -> ParamCounts {
    let k = config.kernel_size;
    let f = config.filters;
    let classes = config.num_classes;
    let conv = |out: usize, cin: usize, kh: usize, kw: usize| out * cin * kh * kw + out;
    let mut gen = 0;
    for block in 0..config.num_gated_blocks {
        let cin = if block == 0 { config.input_channels() } else { f };
        gen += conv(2 * f, cin, k, k); // vertical
        gen += conv(2 * f, cin, 1, k); // horizontal
        gen += conv(2 * f, 2 * f, 1, 1); // vertical -> horizontal
        gen += conv(f, f, 1, 1); // horizontal output
    }
    gen += 2 * f + conv(classes, f, 1, 1);

    let a = config.aux_filters;
    let s = config.se_hidden();
    let mut aux = conv(a, config.input_channels(), k, k) + 2 * a;
    aux += config.aux_residual_blocks * (2 * (conv(a, a, k, k) + 2 * a) + conv(s, a, 1, 1) + conv(a, s, 1, 1));
    aux += conv(classes, a, 1, 1);
    ParamCounts { gen, aux, total: gen + aux }
}
