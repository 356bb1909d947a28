use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::hmc::{run, run_chain, Target};
use super::params::{corr_cholesky, log_sech2, outer};
use super::*;
use crate::linalg;
use crate::raster::{CategoricalRaster, PixelMask};
use crate::rng;

fn normal(r: &mut rng::Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Determinant's log-magnitude by LU with partial pivoting.
fn lu_log_abs_det(mut a: Vec<f64>, n: usize) -> f64 {
    let mut total = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs())).unwrap();
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
        }
        let d = a[col * n + col];
        total += libm::log(d.abs());
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
        }
    }
    total
}

/// The log posterior assembled from explicit dense matrices.
fn dense_oracle(p: &SccarParams, raster: &CategoricalRaster, mask: &PixelMask) -> f64 {
    let (h, w) = raster.dims();
    let (n, k) = (h * w, p.k);
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (yi, xi, yj, xj) = (i / w, i % w, j / w, j % w);
            if yi.abs_diff(yj) + xi.abs_diff(xj) == 1 {
                q[i * n + j] = 1.0;
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| q[i * n..(i + 1) * n].iter().sum()).collect();
    let mut total = 0.0;
    for i in 0..n {
        if !mask.observed()[i] {
            continue;
        }
        let u: Vec<f64> = (0..k).map(|c| (0..k).map(|j| p.omega[i * k + j] * p.a[j * k + c]).sum()).collect();
        let z: f64 = u.iter().map(|v| libm::exp(*v)).sum();
        total += libm::log(libm::exp(u[raster.data()[i] as usize]) / z);
    }
    for c in 0..k {
        // τ D (I − ρ D⁻¹ Q), formed as a product.
        let mut inner = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                inner[i * n + j] = (i == j) as u8 as f64 - p.rho[c] * q[i * n + j] / d[i];
            }
        }
        let prec: Vec<f64> = (0..n * n).map(|ij| p.tau[c] * d[ij / n] * inner[ij]).collect();
        let r: Vec<f64> = (0..n).map(|i| p.omega[i * k + c] - p.m[c]).collect();
        let quad: f64 = (0..n).map(|i| r[i] * (0..n).map(|j| prec[i * n + j] * r[j]).sum::<f64>()).sum();
        total += 0.5 * lu_log_abs_det(prec, n) - 0.5 * quad;
        total += -p.m[c] * p.m[c] / 4.0 + libm::log(2.0 / (core::f64::consts::PI * (4.0 + p.tau[c] * p.tau[c])));
    }
    total
}

fn random_params(n: usize, k: usize, r: &mut rng::Rng) -> SccarParams {
    let layout = Layout { n, k };
    let mut values: Vec<f64> = (0..layout.dim()).map(|_| normal(r)).collect();
    for v in &mut values[layout.rho()] {
        *v *= 3.0;
    }
    UnconstrainedState { layout, values }.to_params()
}

fn random_data(h: usize, w: usize, k: usize, r: &mut rng::Rng) -> (CategoricalRaster, PixelMask) {
    let raster = CategoricalRaster::new(h, w, k, (0..h * w).map(|_| r.random_range(0..k as u8)).collect()).unwrap();
    let mut observed: Vec<bool> = (0..h * w).map(|_| r.random::<f64>() < 0.7).collect();
    observed[0] = true;
    (raster, PixelMask::new(h, w, observed).unwrap())
}

#[test]
fn structure_of_small_grids() {
    let s = CarStructure::grid(3, 4).unwrap();
    assert_eq!(s.len(), 12);
    assert_eq!(s.degree()[0], 2.0);
    assert_eq!(s.degree()[1], 3.0);
    assert_eq!(s.degree()[5], 4.0);
    for i in 0..12 {
        for j in s.neighbors(i) {
            assert!(s.neighbors(j).any(|t| t == i));
            assert_ne!(i, j);
        }
    }
    assert!(s.spectrum().iter().all(|&l| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&l)));
    assert!((s.spectrum().last().unwrap() - 1.0).abs() < 1e-10);
    assert!(CarStructure::grid(1, 1).is_err());
}

#[test]
fn log_det_matches_dense_determinant() {
    for (h, w) in [(2, 2), (3, 4), (4, 4), (1, 5)] {
        let s = CarStructure::grid(h, w).unwrap();
        let n = s.len();
        for &rho in &[1e-6, 0.3, 0.9, 1.0 - 1e-6] {
            for &tau in &[0.1, 1.0, 7.0] {
                let p = s.dense_precision(tau, rho);
                let l = linalg::cholesky(&p, n).expect("CAR precision is positive definite");
                let ours = n as f64 * libm::log(tau) + s.log_det(rho).0;
                assert!((ours - linalg::cholesky_logdet(&l, n)).abs() < 1e-8);
                assert!((ours - lu_log_abs_det(p, n)).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn log_posterior_matches_dense_oracle() {
    let mut r = rng::seeded(11);
    for (h, w) in [(2, 2), (4, 4)] {
        let s = CarStructure::grid(h, w).unwrap();
        for draw in 0..100 {
            let k = 2 + draw % 3;
            let p = random_params(h * w, k, &mut r);
            let (raster, mask) = random_data(h, w, k, &mut r);
            let ours = log_posterior(&p, &raster, &mask, &s).unwrap();
            let oracle = dense_oracle(&p, &raster, &mask);
            assert!((ours - oracle).abs() < 1e-8, "{h}x{w} draw {draw}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn zero_autocorrelation_gives_independent_normals() {
    let s = CarStructure::grid(3, 3).unwrap();
    assert!((s.log_det(0.0).0 - s.degree().iter().map(|d| libm::log(*d)).sum::<f64>()).abs() < 1e-12);
    let mut r = rng::seeded(2);
    let mut p = random_params(9, 2, &mut r);
    p.rho = vec![1.5 * RHO_EPSILON; 2];
    let raster = CategoricalRaster::filled(3, 3, 2, 0).unwrap();
    let mask = PixelMask::all_missing(3, 3);
    let mut expected = 0.0;
    for c in 0..2 {
        for i in 0..9 {
            let prec = p.tau[c] * s.degree()[i];
            let d = p.omega[i * 2 + c] - p.m[c];
            expected += 0.5 * libm::log(prec) - 0.5 * prec * d * d;
        }
        expected += -p.m[c] * p.m[c] / 4.0 + libm::log(2.0 / (core::f64::consts::PI * (4.0 + p.tau[c] * p.tau[c])));
    }
    assert!((log_posterior(&p, &raster, &mask, &s).unwrap() - expected).abs() < 1e-4);
}

#[test]
fn precision_is_positive_definite_across_rho() {
    let s = CarStructure::grid(5, 6).unwrap();
    for i in 1..100 {
        let rho = i as f64 / 100.0;
        assert!(linalg::cholesky(&s.dense_precision(1.3, rho), s.len()).is_ok());
    }
}

#[test]
fn transform_round_trips() {
    let mut r = rng::seeded(5);
    for k in 1..5 {
        let layout = Layout { n: 6, k };
        for _ in 0..50 {
            let values: Vec<f64> = (0..layout.dim()).map(|_| normal(&mut r)).collect();
            let x = UnconstrainedState { layout, values };
            let p = x.to_params();
            p.validate().unwrap();
            let back = UnconstrainedState::from_params(&p).unwrap();
            for (a, b) in back.values.iter().zip(&x.values) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            let again = back.to_params();
            for (a, b) in again.scalars().iter().zip(p.scalars()) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(x.log_jacobian().is_finite());
        }
    }
}

#[test]
fn target_is_posterior_plus_jacobian() {
    let mut r = rng::seeded(8);
    let s = CarStructure::grid(3, 3).unwrap();
    for _ in 0..20 {
        let (raster, mask) = random_data(3, 3, 3, &mut r);
        let t = SccarTarget::new(&s, &raster, &mask).unwrap();
        let values: Vec<f64> = (0..t.dim()).map(|_| normal(&mut r)).collect();
        let x = t.state(values.clone());
        let mut g = vec![0.0; t.dim()];
        let lp = t.log_density_grad(&values, &mut g);
        let expected = log_posterior(&x.to_params(), &raster, &mask, &s).unwrap() + x.log_jacobian();
        assert!((lp - expected).abs() < 1e-9, "{lp} vs {expected}");
    }
}

fn max_rel_grad_error(t: &SccarTarget<'_>, x: &[f64]) -> f64 {
    let mut g = vec![0.0; t.dim()];
    t.log_density_grad(x, &mut g);
    let mut scratch = vec![0.0; t.dim()];
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        xp[j] += h;
        let fp = t.log_density_grad(&xp, &mut scratch);
        xp[j] -= 2.0 * h;
        let fm = t.log_density_grad(&xp, &mut scratch);
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs() / g[j].abs().max(fd.abs()).max(1.0));
    }
    worst
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng::seeded(21);
    for (h, w, k) in [(2, 2, 2), (2, 2, 3), (3, 3, 4)] {
        let s = CarStructure::grid(h, w).unwrap();
        for _ in 0..10 {
            let (raster, mask) = random_data(h, w, k, &mut r);
            let t = SccarTarget::new(&s, &raster, &mask).unwrap();
            let x: Vec<f64> = (0..t.dim()).map(|_| normal(&mut r)).collect();
            let err = max_rel_grad_error(&t, &x);
            assert!(err < 1e-5, "{h}x{w} K={k}: {err}");
        }
    }
}

#[test]
fn correlation_jacobian_matches_numerical_determinant() {
    // The free coordinates of A are its strict lower triangle; the density
    // of y induced by a uniform A is |∂A/∂y|.
    let k = 3;
    let mut r = rng::seeded(4);
    let map = |y: &[f64]| {
        let z: Vec<f64> = y.iter().map(|v| libm::tanh(*v)).collect();
        let a = outer(&corr_cholesky(&z, k).0, k);
        [a[k], a[2 * k], a[2 * k + 1]]
    };
    for _ in 0..20 {
        let y: Vec<f64> = (0..3).map(|_| 0.7 * normal(&mut r)).collect();
        let h = 1e-6;
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let (mut yp, mut ym) = (y.clone(), y.clone());
            yp[j] += h;
            ym[j] -= h;
            let (fp, fm) = (map(&yp), map(&ym));
            for i in 0..3 {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
            - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
            + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
        let z: Vec<f64> = y.iter().map(|v| libm::tanh(*v)).collect();
        let analytic = corr_cholesky(&z, k).1 + y.iter().map(|v| log_sech2(*v)).sum::<f64>();
        assert!((libm::log(det.abs()) - analytic).abs() < 1e-6);
    }
}

#[test]
fn non_finite_terms_are_reported() {
    let s = CarStructure::grid(2, 2).unwrap();
    let mut p = SccarParams::neutral(4, 2);
    p.tau[1] = 1e200;
    let raster = CategoricalRaster::filled(2, 2, 2, 0).unwrap();
    let err = log_posterior(&p, &raster, &PixelMask::all_observed(2, 2), &s).unwrap_err();
    assert!(matches!(err, crate::Error::NonFinite(ref m) if m.contains("class 1")), "{err:?}");
    p.tau[1] = 1.0;
    p.rho[0] = 1.0;
    assert!(log_posterior(&p, &raster, &PixelMask::all_observed(2, 2), &s).is_err());
    assert!(SccarTarget::new(&s, &raster, &PixelMask::all_missing(2, 2)).is_err());
}

struct Gaussian {
    precision: Vec<f64>,
    dim: usize,
}

impl Target for Gaussian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut lp = 0.0;
        for i in 0..d {
            grad[i] = -(0..d).map(|j| self.precision[i * d + j] * x[j]).sum::<f64>();
            lp += 0.5 * x[i] * grad[i];
        }
        lp
    }
}

#[test]
fn pilot_standard_normal() {
    let t = Gaussian { precision: vec![1.0], dim: 1 };
    let cfg = HmcConfig { chains: 4, tune: 500, draws: 1000, seed: 3, ..HmcConfig::default() };
    let chains = run(&t, &cfg).unwrap();
    let traces: Vec<Vec<f64>> = chains.iter().map(|c| c.trace(0)).collect();
    let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
    let (mean, sd) = diagnostics::mean_sd(&refs);
    let mcse = sd / libm::sqrt(ess(&refs).unwrap());
    assert!(mean.abs() < 3.0 * mcse, "mean {mean}, mcse {mcse}");
    assert!((sd - 1.0).abs() < 0.1);
    for c in &chains {
        assert!((0.7..=0.99).contains(&c.accept_rate), "accept {}", c.accept_rate);
        assert_eq!(c.divergences, 0);
    }
    assert!(rhat(&refs).unwrap() < 1.05);
}

#[test]
fn two_dimensional_gaussian_covariance() {
    // Covariance [[1, 0.8·√2], [0.8·√2, 2]] through its precision.
    let c = [1.0, 0.8 * libm::sqrt(2.0), 0.8 * libm::sqrt(2.0), 2.0];
    let det = c[0] * c[3] - c[1] * c[2];
    let t = Gaussian { precision: vec![c[3] / det, -c[1] / det, -c[2] / det, c[0] / det], dim: 2 };
    let cfg = HmcConfig { chains: 1, tune: 1000, draws: 10_000, seed: 9, ..HmcConfig::default() };
    let ch = run_chain(&t, &cfg, 0).unwrap();
    let (a, b) = (ch.trace(0), ch.trace(1));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov = |x: &[f64], mx: f64, y: &[f64], my: f64| {
        x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum::<f64>() / (n - 1.0)
    };
    let emp = [cov(&a, ma, &a, ma), cov(&a, ma, &b, mb), cov(&b, mb, &b, mb)];
    for (e, t) in emp.iter().zip([c[0], c[1], c[3]]) {
        assert!((e - t).abs() < 0.1 * t, "{e} vs {t}");
    }
}

#[test]
fn rhat_cases() {
    let mut r = rng::seeded(1);
    let half: Vec<f64> = (0..500).map(|_| normal(&mut r)).collect();
    let chain: Vec<f64> = half.iter().chain(&half).copied().collect();
    assert!((rhat(&[&chain, &chain]).unwrap() - 1.0).abs() < 1e-12);
    let (c1, c2) = (vec![1.0; 100], vec![2.0; 100]);
    assert!(rhat(&[&c1, &c2]).unwrap() > 10.0);
    assert!(rhat(&[&c1, &c1]).unwrap().is_nan());
    for seed in 0..50 {
        let mut r = rng::seeded(100 + seed);
        let chains: Vec<Vec<f64>> = (0..4).map(|_| (0..2000).map(|_| normal(&mut r)).collect()).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        assert!(rhat(&refs).unwrap() < 1.05);
    }
    assert!(rhat(&[&chain]).is_err());
    assert!(rhat(&[&chain, &chain[..10]]).is_err());
}

#[test]
fn ess_of_independent_and_correlated_draws() {
    let mut r = rng::seeded(6);
    let iid: Vec<Vec<f64>> = (0..4).map(|_| (0..2000).map(|_| normal(&mut r)).collect()).collect();
    let refs: Vec<&[f64]> = iid.iter().map(Vec::as_slice).collect();
    let e = ess(&refs).unwrap();
    assert!((e / 8000.0 - 1.0).abs() < 0.2, "{e}");
    let phi = 0.9;
    let ar: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let mut v = normal(&mut r) / libm::sqrt(1.0 - phi * phi);
            (0..5000)
                .map(|_| {
                    v = phi * v + normal(&mut r);
                    v
                })
                .collect()
        })
        .collect();
    let refs: Vec<&[f64]> = ar.iter().map(Vec::as_slice).collect();
    let expected = 20_000.0 * (1.0 - phi) / (1.0 + phi);
    let e = ess(&refs).unwrap();
    assert!((e / expected - 1.0).abs() < 0.3, "{e} vs {expected}");
}

#[test]
fn predictive_inpaint_clamps_and_saturates() {
    let mut r = rng::seeded(3);
    let (raster, _) = random_data(4, 4, 3, &mut r);
    let draws = vec![random_params(16, 3, &mut r), random_params(16, 3, &mut r)];
    let full = PixelMask::all_observed(4, 4);
    for c in predictive_inpaint(&draws, &raster, &full, 5, 1).unwrap() {
        assert_eq!(c, raster);
    }
    let mask = PixelMask::with_missing_rect(4, 4, 1, 1, 2, 3);
    let a = predictive_inpaint(&draws, &raster, &mask, 20, 7).unwrap();
    assert_eq!(a, predictive_inpaint(&draws, &raster, &mask, 20, 7).unwrap());
    for c in &a {
        for i in 0..16 {
            if mask.observed()[i] {
                assert_eq!(c.data()[i], raster.data()[i]);
            }
        }
    }
    // Class 2 leads every other logit by 30.
    let mut p = SccarParams::neutral(16, 3);
    for i in 0..16 {
        p.omega[i * 3 + 2] = 30.0;
    }
    let done = predictive_inpaint(&[p], &raster, &mask, 200, 2).unwrap();
    for c in &done {
        for i in 0..16 {
            if !mask.observed()[i] {
                assert_eq!(c.data()[i], 2);
            }
        }
    }
    assert!(predictive_inpaint(&[], &raster, &mask, 1, 0).is_err());
    assert!(predictive_inpaint(&draws, &raster, &PixelMask::all_missing(3, 3), 1, 0).is_err());
}

#[test]
fn simulated_fields_have_the_prior_covariance() {
    let s = CarStructure::grid(3, 3).unwrap();
    let mut base = SccarParams::neutral(9, 2);
    base.rho = vec![0.9, 0.2];
    base.tau = vec![1.0, 3.0];
    base.m = vec![0.5, -1.0];
    let reps = 4000;
    let mut sum = [0.0f64; 2];
    let mut sq = [0.0f64; 2];
    for seed in 0..reps {
        let (raster, p) = simulate(&s, &base, seed).unwrap();
        assert_eq!(raster.dims(), (3, 3));
        for c in 0..2 {
            let v = p.omega[4 * 2 + c];
            sum[c] += v;
            sq[c] += v * v;
        }
    }
    for c in 0..2 {
        let cov = linalg::cholesky(&s.dense_precision(base.tau[c], base.rho[c]), 9).unwrap();
        let mut e = vec![0.0; 9];
        e[4] = 1.0;
        let var = linalg::cholesky_solve(&cov, 9, &e)[4];
        let mean = sum[c] / reps as f64;
        let emp = sq[c] / reps as f64 - mean * mean;
        assert!((mean - base.m[c]).abs() < 4.0 * libm::sqrt(var / reps as f64));
        assert!((emp / var - 1.0).abs() < 0.1, "{emp} vs {var}");
    }
}

#[test]
fn small_fit_produces_diagnostics() {
    let s = CarStructure::grid(3, 3).unwrap();
    let mut r = rng::seeded(4);
    let (raster, mask) = random_data(3, 3, 2, &mut r);
    let cfg = HmcConfig { chains: 2, tune: 200, draws: 200, seed: 1, ..HmcConfig::default() };
    let fit = hmc_fit(&raster, &mask, &s, &cfg).unwrap();
    assert_eq!(fit.chains.len(), 2);
    assert_eq!(fit.chains[0].len(), 200);
    assert_eq!(fit.summary.len(), scalar_names(9, 2).len());
    assert!(fit.summary.iter().all(|p| p.rhat.is_finite() && p.ess > 0.0));
    let (again, _) = fit_chain(&raster, &mask, &s, &cfg, 1).unwrap();
    assert_eq!(again, fit.chains[1]);
    assert!(fit.draws().all(|p| p.validate().is_ok()));
}

