use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::grad::{ParamId, Real, Tensor};
use crate::raster::{synth_landscape, CategoricalRaster, MaskFamily, PixelMask, SynthParams};
use crate::rng;

fn toy_config() -> ModelConfig {
    ModelConfig {
        image_size: 6,
        num_classes: 4,
        num_gated_blocks: 3,
        filters: 4,
        kernel_size: 3,
        aux_residual_blocks: 1,
        aux_filters: 4,
        squeeze_excite_reduction: 2,
    }
}

fn random_raster(n: usize, k: usize, seed: u64) -> CategoricalRaster {
    let mut r = rng::seeded(seed);
    CategoricalRaster::new(n, n, k, (0..n * n).map(|_| r.random_range(0..k as u8)).collect()).unwrap()
}

fn gen_logits_of<T: Real>(model: &Model<T>, image: &CategoricalRaster) -> Tensor<T> {
    let n = model.config().image_size;
    let mask = PixelMask::all_missing(n, n);
    let (gen, _) = model.encode(&[(image, &mask)]).unwrap();
    model.gen_logits(gen).unwrap()
}

#[test]
fn registry_matches_count_params() {
    for cfg in [toy_config(), ModelConfig::desk()] {
        let model = Model::<f32>::new(cfg.clone(), 1).unwrap();
        assert_eq!(model.trainable_count(), count_params(&cfg).total);
    }
}

#[test]
fn causality_exact_zero_for_later_pixels() {
    let cfg = ModelConfig::desk();
    let n = cfg.image_size;
    let model = Model::<f32>::new(cfg.clone(), 3).unwrap();
    let mut r = rng::seeded(4);
    let image = random_raster(n, cfg.num_classes, 5);
    let base = gen_logits_of(&model, &image);
    for _ in 0..100 {
        let i = r.random_range(0..n * n);
        let j = r.random_range(i..n * n);
        let mut changed = image.clone();
        let old = changed.get(j / n, j % n);
        changed.set(j / n, j % n, (old + 1 + r.random_range(0..cfg.num_classes as u8 - 1)) % cfg.num_classes as u8);
        let probe = gen_logits_of(&model, &changed);
        for k in 0..cfg.num_classes {
            let idx = k * n * n + i;
            assert_eq!(base.data()[idx].to_bits(), probe.data()[idx].to_bits(), "pixel {i} moved by {j}");
        }
    }
}

#[test]
fn no_blind_spot_up_and_right() {
    let cfg = ModelConfig::desk();
    let n = cfg.image_size;
    let model = Model::<f32>::new(cfg.clone(), 6).unwrap();
    let image = random_raster(n, cfg.num_classes, 7);
    let base = gen_logits_of(&model, &image);
    let (y, x) = (8, 8);
    for (py, px) in [(y - 1, x + 1), (y - 1, x), (y, x - 1), (y - 2, x + 2), (y - 1, x - 1)] {
        let mut changed = image.clone();
        changed.set(py, px, (image.get(py, px) + 1) % cfg.num_classes as u8);
        let probe = gen_logits_of(&model, &changed);
        let moved = (0..cfg.num_classes).any(|k| base.data()[k * n * n + y * n + x] != probe.data()[k * n * n + y * n + x]);
        assert!(moved, "predecessor ({py},{px}) invisible at ({y},{x})");
    }
}

#[test]
fn auxiliary_path_sees_observed_pixels_anywhere() {
    let cfg = toy_config();
    let model = Model::<f64>::new(cfg.clone(), 8).unwrap();
    let image = random_raster(6, 4, 9);
    let mask = PixelMask::all_observed(6, 6);
    let (_, aux) = model.encode(&[(&image, &mask)]).unwrap();
    let base = model.aux_logits(aux).unwrap();
    // The last pixel is a successor of every other pixel.
    let mut changed = image.clone();
    changed.set(5, 5, (image.get(5, 5) + 1) % 4);
    let (_, aux2) = model.encode(&[(&changed, &mask)]).unwrap();
    let probe = model.aux_logits(aux2).unwrap();
    // (4,4) precedes (5,5) in raster order, yet its auxiliary logits move.
    assert!((0..4).any(|k| base.data()[k * 36 + 28] != probe.data()[k * 36 + 28]));
}

#[test]
fn missing_pixels_are_hidden_from_auxiliary_input() {
    let model = Model::<f64>::new(toy_config(), 1).unwrap();
    let image = random_raster(6, 4, 2);
    let mask = PixelMask::from_family(MaskFamily::CenterMissing, 6, 6);
    let (gen, aux) = model.encode(&[(&image, &mask)]).unwrap();
    for p in 0..36 {
        let hot_gen: f64 = (0..4).map(|k| gen.data()[k * 36 + p]).sum();
        let hot_aux: f64 = (0..4).map(|k| aux.data()[k * 36 + p]).sum();
        let m = if mask.observed()[p] { 1.0 } else { 0.0 };
        assert_eq!(hot_gen, 1.0);
        assert_eq!(hot_aux, m);
        assert_eq!(aux.data()[4 * 36 + p], m);
        assert_eq!(gen.data()[4 * 36 + p], m);
    }
}

#[test]
fn softmax_of_fresh_logits_sums_to_one() {
    let model = Model::<f32>::new(ModelConfig::desk(), 2).unwrap();
    let image = random_raster(16, 5, 1);
    let mask = PixelMask::from_family(MaskFamily::TopMissing, 16, 16);
    let logits = model.forward_logits(&image, &mask, Mode::Eval).unwrap();
    assert!(logits.all_finite());
    for p in 0..256 {
        let row: Vec<f64> = (0..5).map(|k| logits.data()[k * 256 + p] as f64).collect();
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| libm::exp(v - m)).sum();
        let total: f64 = row.iter().map(|v| libm::exp(v - m) / z).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}

fn zero_heads<T: Real>(model: &mut Model<T>) {
    let names = ["gen.head.conv.weight", "gen.head.conv.bias", "aux.head.conv.weight", "aux.head.conv.bias"];
    for name in names {
        let id = model.params().find(name).unwrap();
        model.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}

#[test]
fn uniform_logits_give_log2_k_bits() {
    let cfg = ModelConfig { num_classes: 20, ..toy_config() };
    let mut model = Model::<f64>::new(cfg, 1).unwrap();
    zero_heads(&mut model);
    let image = random_raster(6, 20, 3);
    let mask = PixelMask::all_missing(6, 6);
    let nll = model.loss(&[(&image, &mask)], Mode::Eval).unwrap();
    assert!((nll.bits_per_dim() - libm::log2(20.0)).abs() < 1e-12);
}

fn jitter(model: &mut Model<f64>, seed: u64) {
    let mut r = rng::seeded(seed);
    let ids: Vec<ParamId> = model.params().ids().collect();
    for id in ids {
        let name = model.params().entries()[id.index()].name.clone();
        for v in model.params_mut().get_mut(id).data_mut() {
            *v = if name.ends_with("running_var") { r.random_range(0.5..2.0) } else { *v + r.random_range(-0.3..0.3) };
        }
    }
}

/// Central difference at step `h`, halving the step while the two probes
/// land on different ReLU activation patterns than the base point.
fn central_difference(model: &mut Model<f64>, batch: &[(&CategoricalRaster, &PixelMask)], mode: Mode, id: ParamId, j: usize) -> f64 {
    let (_, base) = model.loss_with_pattern(batch, mode).unwrap();
    let orig = model.params().get(id).data()[j];
    let mut h = 1e-3;
    loop {
        model.params_mut().get_mut(id).data_mut()[j] = orig + h;
        let (plus, pp) = model.loss_with_pattern(batch, mode).unwrap();
        model.params_mut().get_mut(id).data_mut()[j] = orig - h;
        let (minus, pm) = model.loss_with_pattern(batch, mode).unwrap();
        model.params_mut().get_mut(id).data_mut()[j] = orig;
        if (pp == base && pm == base) || h < 1e-7 {
            return (plus.nats - minus.nats) / (2.0 * h);
        }
        h /= 2.0;
    }
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let mut model = Model::<f64>::new(toy_config(), 11).unwrap();
    // Zero biases put the first pixel exactly on a ReLU kink; move every
    // entry to a generic point.
    jitter(&mut model, 12);
    let images = [random_raster(6, 4, 1), random_raster(6, 4, 2)];
    let masks = [PixelMask::from_family(MaskFamily::CenterMissing, 6, 6), PixelMask::all_missing(6, 6)];
    let batch: Vec<_> = images.iter().zip(&masks).collect();
    for mode in [Mode::Train, Mode::Eval] {
        let (_, grads, _) = model.loss_and_grad(&batch, mode).unwrap();
        let mut worst = 0.0f64;
        let ids: Vec<ParamId> = model.params().ids().collect();
        for id in ids {
            if !model.params().entries()[id.index()].trainable {
                continue;
            }
            for j in 0..model.params().get(id).numel() {
                let numeric = central_difference(&mut model, &batch, mode, id, j);
                let a = grads[id.index()].data()[j];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            }
        }
        assert!(worst < 1e-3, "{mode:?}: worst relative error {worst}");
    }
}

#[test]
fn precision_cast_preserves_logits() {
    let model = Model::<f64>::new(toy_config(), 4).unwrap();
    let single: Model<f32> = model.cast();
    let image = random_raster(6, 4, 5);
    let mask = PixelMask::all_observed(6, 6);
    let a = model.forward_logits(&image, &mask, Mode::Eval).unwrap();
    let b = single.forward_logits(&image, &mask, Mode::Eval).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - *y as f64).abs() < 1e-4);
    }
}

#[test]
fn top_rows_match_full_forward() {
    let model = Model::<f32>::new(ModelConfig::desk(), 5).unwrap();
    let image = random_raster(16, 5, 6);
    let mask = PixelMask::all_missing(16, 16);
    let (gen, _) = model.encode(&[(&image, &mask)]).unwrap();
    let full = model.gen_logits(gen.clone()).unwrap();
    let part = model.gen_logits(top_rows(&gen, 5).unwrap()).unwrap();
    for k in 0..5 {
        assert_eq!(&full.data()[k * 256..k * 256 + 80], &part.data()[k * 80..(k + 1) * 80]);
    }
}

#[test]
fn dimension_and_class_checks() {
    let model = Model::<f32>::new(toy_config(), 1).unwrap();
    let wrong_size = random_raster(5, 4, 1);
    let mask5 = PixelMask::all_missing(5, 5);
    assert!(model.forward_logits(&wrong_size, &mask5, Mode::Eval).is_err());
    let wrong_k = random_raster(6, 5, 1);
    let mask6 = PixelMask::all_missing(6, 6);
    assert!(model.forward_logits(&wrong_k, &mask6, Mode::Eval).is_err());
}

#[test]
fn epoch_zero_matches_fresh_loss_and_training_is_reproducible() {
    let cfg = toy_config();
    let images: Vec<_> = (0..6).map(|s| random_raster(6, 4, s)).collect();
    let tc = TrainConfig { epochs: 2, batch_size: 3, seed: 9, ..TrainConfig::default() };
    let fresh = Model::<f32>::new(cfg.clone(), 1).unwrap();
    let expected = evaluate(&fresh, &images, 64).unwrap();
    let run = || {
        let mut model = Model::<f32>::new(cfg.clone(), 1).unwrap();
        let log = train(&mut model, &images, &images[..2], &tc, |_, _| Control::Continue).unwrap();
        (log, model.params().entries().iter().map(|e| e.value.data().to_vec()).collect::<Vec<_>>())
    };
    let (log, params) = run();
    assert_eq!(log[0].epoch, 0);
    assert_eq!(log[0].nll, expected);
    assert_eq!(log.len(), 6);
    let (log2, params2) = run();
    assert_eq!(log, log2);
    assert_eq!(params, params2);
    assert!(train(&mut Model::new(cfg, 1).unwrap(), &[], &[], &tc, |_, _| Control::Continue).is_err());
}

#[test]
fn memorizes_a_constant_image() {
    let cfg = ModelConfig { image_size: 8, num_classes: 5, ..toy_config() };
    let mut model = Model::<f32>::new(cfg, 2).unwrap();
    let images = vec![CategoricalRaster::filled(8, 8, 5, 3).unwrap(); 4];
    let tc = TrainConfig {
        epochs: 400,
        batch_size: 4,
        adam: crate::grad::AdamConfig { lr: 1e-2, ..Default::default() },
        ..TrainConfig::default()
    };
    let log = train(&mut model, &images, &images[..1], &tc, |_, recs| {
        if recs[1].nll.bits_per_dim() < 0.05 { Control::Stop } else { Control::Continue }
    })
    .unwrap();
    let last = log.last().unwrap();
    assert!(last.nll.bits_per_dim() < 0.05, "held-out bits/dim {}", last.nll.bits_per_dim());
}

#[test]
fn learns_spatial_structure_beyond_marginals() {
    let cfg = ModelConfig { image_size: 8, ..ModelConfig::desk() };
    let mut model = Model::<f32>::new(cfg, 3).unwrap();
    let params = SynthParams::default();
    let all: Vec<_> = (0..120).map(|s| synth_landscape(8, 8, 5, s, &params).unwrap()).collect();
    let (tr, ho) = all.split_at(100);
    let mut counts = [0usize; 5];
    for im in tr {
        for &c in im.data() {
            counts[c as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let baseline: f64 =
        counts.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / total as f64) * libm::log2(c as f64 / total as f64)).sum();
    let tc = TrainConfig { epochs: 15, batch_size: 10, adam: crate::grad::AdamConfig { lr: 2e-3, ..Default::default() }, ..TrainConfig::default() };
    let log = train(&mut model, tr, ho, &tc, |_, recs| {
        if recs[1].nll.bits_per_dim() < baseline { Control::Stop } else { Control::Continue }
    })
    .unwrap();
    let last = log.last().unwrap();
    assert!(last.nll.bits_per_dim() < baseline, "{} vs baseline {baseline}", last.nll.bits_per_dim());
}

