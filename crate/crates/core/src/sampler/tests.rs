use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::pccnn::{Mode, ModelConfig};
use crate::raster::MaskFamily;

fn tiny_config(n: usize, k: usize) -> ModelConfig {
    ModelConfig {
        image_size: n,
        num_classes: k,
        num_gated_blocks: 2,
        filters: 4,
        kernel_size: 3,
        aux_residual_blocks: 1,
        aux_filters: 4,
        squeeze_excite_reduction: 2,
    }
}

/// Random init with biases moved away from zero so the distribution is far
/// from uniform.
fn lively_model(n: usize, k: usize, seed: u64) -> Model<f64> {
    let mut model = Model::<f64>::new(tiny_config(n, k), seed).unwrap();
    let mut r = rng::seeded(seed + 100);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        if !model.params().entries()[id.index()].trainable {
            continue;
        }
        for v in model.params_mut().get_mut(id).data_mut() {
            *v = *v * 3.0 + r.random_range(-0.5..0.5);
        }
    }
    model
}

fn random_raster(n: usize, k: usize, seed: u64) -> CategoricalRaster {
    let mut r = rng::seeded(seed);
    CategoricalRaster::new(n, n, k, (0..n * n).map(|_| r.random_range(0..k as u8)).collect()).unwrap()
}

fn request<'a>(image: &'a CategoricalRaster, mask: &'a PixelMask, t: f64, seed: u64, count: usize) -> SampleRequest<'a> {
    SampleRequest { image, mask, temperature: t, seed, count, orientation: Orientation::Identity }
}

#[test]
fn temperature_scale_examples() {
    let p = temperature_scale(&[2.0, 0.0], 0.5).unwrap();
    assert!((p[0] - 0.9820).abs() < 1e-4 && (p[1] - 0.0180).abs() < 1e-4);
    let u = temperature_scale(&[0.3; 7], 3.0).unwrap();
    assert!(u.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
    assert!(temperature_scale(&[1.0], 0.0).is_err());
    assert!(temperature_scale(&[f64::NAN, 1.0], 1.0).is_err());
}

#[test]
fn temperature_one_matches_cross_entropy_probabilities() {
    let logits = [0.5, -1.0, 2.0];
    let p = temperature_scale(&logits, 1.0).unwrap();
    let lse = crate::grad::log_sum_exp(&logits);
    for (pi, l) in p.iter().zip(logits) {
        assert!((pi - libm::exp(l - lse)).abs() < 1e-15);
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * libm::log(*v)).sum::<f64>()
}

#[test]
fn softmax_entropy_non_decreasing_in_temperature() {
    let mut r = rng::seeded(1);
    let temps = [0.05, 0.1, 0.25, 0.5, 1.0, 1.1, 1.25, 1.5, 3.0, 10.0];
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..5).map(|_| r.random_range(-4.0..4.0)).collect();
        let mut prev = -1.0;
        for &t in &temps {
            let h = entropy(&temperature_scale(&logits, t).unwrap());
            assert!(h >= prev - 1e-12);
            assert!((temperature_scale(&logits, t).unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prev = h;
        }
    }
}

#[test]
fn all_observed_is_returned_verbatim() {
    let model = lively_model(4, 3, 1);
    let image = random_raster(4, 3, 2);
    let mask = PixelMask::all_observed(4, 4);
    for t in [0.25, 1.0, 1.5] {
        for c in sample(&model, &request(&image, &mask, t, 9, 3)).unwrap() {
            assert_eq!(c.raster, image);
            assert_eq!(c.log_prob, 0.0);
            assert_eq!(c.clamped, 16);
        }
    }
}

#[test]
fn clamping_validity_and_determinism() {
    let model = lively_model(6, 4, 3);
    let image = random_raster(6, 4, 4);
    for fam in MaskFamily::ALL {
        let mask = PixelMask::from_family(fam, 6, 6);
        let mut req = request(&image, &mask, 1.0, 5, 5);
        req.orientation = Orientation::RandomFlips;
        let a = sample(&model, &req).unwrap();
        let b = sample(&model, &req).unwrap();
        assert_eq!(a, b);
        for c in &a {
            assert!(c.raster.data().iter().all(|&v| v < 4));
            for p in 0..36 {
                if mask.observed()[p] {
                    assert_eq!(c.raster.data()[p], image.data()[p]);
                }
            }
        }
    }
}

#[test]
fn chunking_and_ranges_do_not_change_results() {
    let model = lively_model(4, 3, 5);
    let image = random_raster(4, 3, 6);
    let mask = PixelMask::from_family(MaskFamily::BottomMissing, 4, 4);
    let req = request(&image, &mask, 1.0, 11, 7);
    let whole = sample_range(&model, &req, 0..7, 16).unwrap();
    let mut split = sample_range(&model, &req, 0..3, 2).unwrap();
    split.extend(sample_range(&model, &req, 3..7, 1).unwrap());
    assert_eq!(whole, split);
}

/// Decodes pixel by pixel through the public single-image forward pass.
fn greedy_oracle(model: &Model<f64>, image: &CategoricalRaster, mask: &PixelMask) -> CategoricalRaster {
    let n = image.height();
    let k = model.config().num_classes;
    let mut cur = image.clone();
    for p in 0..n * n {
        if mask.observed()[p] {
            continue;
        }
        // Pixels at and after p are invisible to the generative network,
        // whatever they hold.
        let logits = model.forward_logits(&cur, mask, Mode::Eval).unwrap();
        let row: Vec<f64> = (0..k).map(|c| logits.data()[c * n * n + p]).collect();
        cur.set(p / n, p % n, argmax(&row) as u8);
    }
    cur
}

#[test]
fn vanishing_temperature_is_greedy() {
    for seed in 0..4 {
        let model = lively_model(5, 4, seed);
        let image = random_raster(5, 4, seed + 10);
        let mask = PixelMask::from_family(MaskFamily::CenterMissing, 5, 5);
        let expected = greedy_oracle(&model, &image, &mask);
        for c in sample(&model, &request(&image, &mask, 1e-6, seed, 3)).unwrap() {
            assert_eq!(c.raster, expected);
        }
    }
    assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
}

#[test]
fn exact_distribution_on_two_by_two() {
    let model = lively_model(2, 2, 7);
    let mask = PixelMask::all_missing(2, 2);
    let zero = CategoricalRaster::filled(2, 2, 2, 0).unwrap();
    let mut exact = [0.0f64; 16];
    for (code, e) in exact.iter_mut().enumerate() {
        let data = (0..4).map(|b| ((code >> b) & 1) as u8).collect();
        let r = CategoricalRaster::new(2, 2, 2, data).unwrap();
        *e = libm::exp(score(&model, &r).unwrap().nats);
    }
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let draws = 50_000;
    let samples = sample_range(&model, &request(&zero, &mask, 1.0, 3, draws), 0..draws, 256).unwrap();
    let mut counts = [0usize; 16];
    for c in &samples {
        let code: usize = c.raster.data().iter().enumerate().map(|(b, &v)| (v as usize) << b).sum();
        counts[code] += 1;
    }
    let tv: f64 = 0.5 * (0..16).map(|i| (counts[i] as f64 / draws as f64 - exact[i]).abs()).sum::<f64>();
    assert!(tv < 0.02, "total variation {tv}");
    // The distribution is not close to uniform, so the check has power.
    assert!(exact.iter().any(|&p| (p - 1.0 / 16.0).abs() > 0.03));
}

#[test]
fn sampling_path_log_prob_matches_score() {
    let model = lively_model(3, 3, 8);
    let zero = CategoricalRaster::filled(3, 3, 3, 0).unwrap();
    let mask = PixelMask::all_missing(3, 3);
    for c in sample(&model, &request(&zero, &mask, 1.0, 4, 10)).unwrap() {
        let s = score(&model, &c.raster).unwrap();
        assert!((c.log_prob - s.nats).abs() < 1e-5, "{} vs {}", c.log_prob, s.nats);
    }
}

#[test]
fn score_paths_agree_and_uniform_model_is_analytic() {
    let model = lively_model(5, 4, 9);
    for seed in 0..3 {
        let r = random_raster(5, 4, seed);
        let a = score(&model, &r).unwrap();
        let b = score_sequential(&model, &r).unwrap();
        assert!((a.nats - b.nats).abs() < 1e-4);
        assert!((a.bits_per_dim - (-a.nats / core::f64::consts::LN_2 / 25.0)).abs() < 1e-12);
    }
    let mut flat = Model::<f64>::new(ModelConfig { image_size: 40, num_classes: 20, ..tiny_config(40, 20) }, 1).unwrap();
    for name in ["gen.head.conv.weight", "gen.head.conv.bias", "aux.head.conv.weight", "aux.head.conv.bias"] {
        let id = flat.params().find(name).unwrap();
        flat.params_mut().get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let s = score(&flat, &random_raster(40, 20, 1)).unwrap();
    assert!((s.nats + 1600.0 * libm::log(20.0)).abs() < 1e-8);
    assert!((s.bits_per_dim - libm::log2(20.0)).abs() < 1e-12);
}

#[test]
fn orientation_round_trip() {
    let image = random_raster(5, 3, 1);
    let mask = PixelMask::from_family(MaskFamily::TopMissing, 5, 5);
    let (a, m, inv) = orient(&image, &mask, Orientation::Identity, 3);
    assert_eq!((a.clone(), m), (image.clone(), mask.clone()));
    assert_eq!(inv, Flip::default());
    let h = Flip { horizontal: true, vertical: false };
    assert_eq!(h.raster(&h.raster(&image)), image);
    for seed in 0..20 {
        let (a, m, inv) = orient(&image, &mask, Orientation::RandomFlips, seed);
        assert_eq!(orient(&image, &mask, Orientation::RandomFlips, seed).0, a);
        assert_eq!(inv.raster(&a), image);
        assert_eq!(inv.mask(&m), mask);
    }
}

#[test]
fn request_validation() {
    let model = lively_model(3, 3, 1);
    let image = random_raster(3, 3, 1);
    let mask = PixelMask::all_missing(3, 3);
    assert!(matches!(sample(&model, &request(&image, &mask, 0.0, 1, 1)), Err(Error::BadTemperature(_))));
    assert!(sample(&model, &request(&image, &mask, 1.0, 1, 0)).is_err());
    let wrong = random_raster(4, 3, 1);
    let wmask = PixelMask::all_missing(4, 4);
    assert!(sample(&model, &request(&wrong, &wmask, 1.0, 1, 1)).is_err());
    let _ = vec![0u8; 1];
}
