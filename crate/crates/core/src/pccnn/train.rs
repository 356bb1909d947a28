use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::model::{Mode, Model, Nll};
use crate::error::{Error, Result};
use crate::grad::{AdamConfig, AdamState};
use crate::raster::{CategoricalRaster, MaskFamily, PixelMask};
use crate::rng;

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Weight of the newest batch in the running batch-norm statistics.
    pub norm_momentum: f64,
    /// Images per forward pass during evaluation.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, adam: AdamConfig::default(), seed: 0, norm_momentum: 0.1, eval_batch: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Heldout,
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub nll: Nll,
}

/// Whether training continues after an epoch callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Mean per-pixel NLL in eval mode with every pixel hidden from the
/// auxiliary network, i.e. the unconditional likelihood.
pub fn evaluate(model: &Model, images: &[CategoricalRaster], eval_batch: usize) -> Result<Nll> {
    if images.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let n = model.config().image_size;
    let mask = PixelMask::all_missing(n, n);
    let mut total = 0.0;
    for chunk in images.chunks(eval_batch.max(1)) {
        let batch: Vec<_> = chunk.iter().map(|im| (im, &mask)).collect();
        total += model.loss(&batch, Mode::Eval)?.nats * chunk.len() as f64;
    }
    Ok(Nll { nats: total / images.len() as f64 })
}

/// Adam over shuffled mini-batches with a fresh mask per image and epoch,
/// drawn uniformly from the four mask families.
pub struct Trainer {
    config: TrainConfig,
    adam: AdamState,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: &Model, config: TrainConfig) -> Result<Self> {
        if config.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2 for batch statistics"));
        }
        Ok(Self { adam: AdamState::new(config.adam, model.params()), epoch: 0, config })
    }

    /// Resumes with saved optimizer moments.
    pub fn with_state(model: &Model, config: TrainConfig, adam: AdamState, epoch: usize) -> Result<Self> {
        let mut t = Self::new(model, config)?;
        if adam.m.len() != model.params().len() {
            return Err(Error::shape("trainer", "optimizer state does not match the model"));
        }
        t.adam = adam;
        t.epoch = epoch;
        Ok(t)
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over `images`; returns the mean training NLL of its batches.
    pub fn epoch(&mut self, model: &mut Model, images: &[CategoricalRaster]) -> Result<Nll> {
        if images.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let n = model.config().image_size;
        // One stream per epoch, so a resumed run repeats the same schedule.
        let mut rng = rng::substream(self.config.seed, self.epoch as u64);
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut rng);
        let masks: Vec<PixelMask> = order
            .iter()
            .map(|_| PixelMask::from_family(MaskFamily::ALL[rng.random_range(0..MaskFamily::ALL.len())], n, n))
            .collect();
        let mut total = 0.0;
        let mut count = 0;
        let bs = self.config.batch_size;
        // A trailing batch of one cannot form batch statistics; fold it into
        // the previous batch.
        let mut starts: Vec<usize> = (0..order.len()).step_by(bs).collect();
        if order.len() > 1 && order.len() % bs == 1 {
            starts.pop();
        }
        for (b, &start) in starts.iter().enumerate() {
            let end = starts.get(b + 1).copied().unwrap_or(order.len());
            let batch: Vec<_> = (start..end).map(|i| (&images[order[i]], &masks[i])).collect();
            let (nll, grads, updates) = model.loss_and_grad(&batch, Mode::Train)?;
            self.adam.step(model.params_mut(), &grads)?;
            model.apply_norm_updates(&updates, self.config.norm_momentum);
            total += nll.nats * batch.len() as f64;
            count += batch.len();
        }
        self.epoch += 1;
        Ok(Nll { nats: total / count as f64 })
    }
}

/// Trains for up to `config.epochs` epochs.
///
/// The log starts with epoch 0, the evaluation of the initial parameters on
/// both splits; later train entries are batch means during the epoch and
/// held-out entries are [`evaluate`] after it. `on_epoch` sees each epoch's
/// records and may stop early.
pub fn train(
    model: &mut Model,
    train_set: &[CategoricalRaster],
    heldout: &[CategoricalRaster],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&Model, &[EpochRecord]) -> Control,
) -> Result<Vec<EpochRecord>> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut log = Vec::new();
    let mut records = |epoch: usize, tr: Nll, model: &Model, log: &mut Vec<EpochRecord>| -> Result<Control> {
        let mut recs = alloc::vec![EpochRecord { epoch, split: Split::Train, nll: tr }];
        if !heldout.is_empty() {
            let nll = evaluate(model, heldout, config.eval_batch)?;
            recs.push(EpochRecord { epoch, split: Split::Heldout, nll });
        }
        let control = on_epoch(model, &recs);
        log.extend(recs);
        Ok(control)
    };
    let initial = evaluate(model, train_set, config.eval_batch)?;
    if records(0, initial, model, &mut log)? == Control::Stop {
        return Ok(log);
    }
    let mut trainer = Trainer::new(model, config.clone())?;
    for epoch in 1..=config.epochs {
        let nll = trainer.epoch(model, train_set)?;
        if records(epoch, nll, model, &mut log)? == Control::Stop {
            break;
        }
    }
    Ok(log)
}
