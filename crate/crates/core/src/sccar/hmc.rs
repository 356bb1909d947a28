//! Hamiltonian Monte Carlo with a fixed number of leapfrog steps, a
//! dual-averaged step size and a windowed diagonal mass matrix.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// A differentiable log density on `R^dim`.
pub trait Target {
    fn dim(&self) -> usize;
    /// Writes the gradient into `grad` and returns the log density.
    /// Non-finite values mark points outside the support.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HmcConfig {
    pub chains: usize,
    pub tune: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub leapfrog_steps: usize,
    /// Post-tuning divergence fraction above which a chain fails.
    pub max_divergence_rate: f64,
    /// Initial points are uniform in `[-r, r]` per coordinate.
    pub init_radius: f64,
    /// Each transition uses a step size uniform within this fraction of
    /// the adapted one.
    pub step_jitter: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            tune: 2000,
            draws: 2000,
            target_accept: 0.9,
            leapfrog_steps: 32,
            max_divergence_rate: 0.25,
            init_radius: 1.0,
            step_jitter: 0.2,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws == 0 || self.leapfrog_steps == 0 {
            return Err(Error::invalid("chains, draws and leapfrog steps must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target acceptance must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.step_jitter) || !(self.init_radius >= 0.0) {
            return Err(Error::invalid("step jitter must lie in [0, 1) and the init radius be non-negative"));
        }
        Ok(())
    }
}

/// Energy error beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub dim: usize,
    /// `draws × dim`, row-major.
    pub draws: Vec<f64>,
    /// Mean acceptance probability over the draws.
    pub accept_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    /// Trace of coordinate `j`.
    pub fn trace(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.draws[i * self.dim + j]).collect()
    }
}

struct Point {
    x: Vec<f64>,
    grad: Vec<f64>,
    lp: f64,
}

impl Point {
    fn at<T: Target + ?Sized>(target: &T, x: Vec<f64>) -> Self {
        let mut grad = vec![0.0; x.len()];
        let lp = target.log_density_grad(&x, &mut grad);
        Self { x, grad, lp }
    }

    fn is_valid(&self) -> bool {
        self.lp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// Result of one trajectory: the end point if accepted, the acceptance
/// probability and whether it diverged.
struct Transition {
    next: Option<Point>,
    accept: f64,
    divergent: bool,
}

fn kinetic(p: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
}

fn trajectory<T: Target + ?Sized>(
    target: &T,
    start: &Point,
    inv_metric: &[f64],
    eps: f64,
    steps: usize,
    rng: &mut rng::Rng,
    accept_u: Option<f64>,
) -> Transition {
    let mut p: Vec<f64> =
        inv_metric.iter().map(|&m| {
            let z: f64 = StandardNormal.sample(rng);
            z / libm::sqrt(m)
        }).collect();
    let h0 = -start.lp + kinetic(&p, inv_metric);
    let mut x = start.x.clone();
    let mut grad = start.grad.clone();
    let mut lp = start.lp;
    for _ in 0..steps {
        for (pi, g) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * g;
        }
        for ((xi, pi), m) in x.iter_mut().zip(&p).zip(inv_metric) {
            *xi += eps * m * pi;
        }
        lp = target.log_density_grad(&x, &mut grad);
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Transition { next: None, accept: 0.0, divergent: true };
        }
        for (pi, g) in p.iter_mut().zip(&grad) {
            *pi += 0.5 * eps * g;
        }
    }
    let delta = -lp + kinetic(&p, inv_metric) - h0;
    if !delta.is_finite() || delta > DIVERGENCE_THRESHOLD {
        return Transition { next: None, accept: 0.0, divergent: true };
    }
    let accept = libm::exp(-delta).min(1.0);
    let u = accept_u.unwrap_or_else(|| rng.random::<f64>());
    let next = (u < accept).then_some(Point { x, grad, lp });
    Transition { next, accept, divergent: false }
}

/// Doubles or halves `eps` until one leapfrog step crosses acceptance 1/2.
fn reasonable_step<T: Target + ?Sized>(target: &T, at: &Point, inv_metric: &[f64], rng: &mut rng::Rng) -> f64 {
    let mut eps = 1.0;
    let accept = |eps: f64, rng: &mut rng::Rng| trajectory(target, at, inv_metric, eps, 1, rng, Some(1.0)).accept;
    let up = accept(eps, rng) > 0.5;
    for _ in 0..60 {
        let a = accept(eps, rng);
        if up != (a > 0.5) {
            break;
        }
        eps = if up { eps * 2.0 } else { eps / 2.0 };
    }
    eps
}

struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    count: f64,
}

impl DualAveraging {
    fn new(eps: f64, target: f64) -> Self {
        Self { mu: libm::log(10.0 * eps), target, h_bar: 0.0, log_eps: libm::log(eps), log_eps_bar: 0.0, count: 0.0 }
    }

    fn update(&mut self, accept: f64) {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.count += 1.0;
        let w = 1.0 / (self.count + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        self.log_eps = self.mu - libm::sqrt(self.count) / GAMMA * self.h_bar;
        let x = libm::pow(self.count, -KAPPA);
        self.log_eps_bar = x * self.log_eps + (1.0 - x) * self.log_eps_bar;
    }
}

/// Iterations (0-based, within tuning) after which the metric is updated.
fn window_ends(tune: usize) -> Vec<usize> {
    if tune < 20 {
        return Vec::new();
    }
    let (init, term, base) = if tune >= 150 { (75, 50, 25) } else { (tune * 15 / 100, tune / 10, tune * 75 / 100) };
    let last = tune - term;
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = base;
    while start < last {
        let mut end = start + size;
        // A window too short to double again absorbs the remainder.
        if end + 2 * size > last {
            end = last;
        }
        ends.push(end - 1);
        start = end;
        size *= 2;
    }
    ends
}

fn init_point<T: Target + ?Sized>(target: &T, radius: f64, rng: &mut rng::Rng) -> Result<Point> {
    for _ in 0..100 {
        let x: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-1.0..=1.0) * radius).collect();
        let p = Point::at(target, x);
        if p.is_valid() {
            return Ok(p);
        }
    }
    Err(Error::NonFinite("log density at every initial point tried".into()))
}

/// Runs chain `chain` of `config`; its random stream is substream `chain`
/// of the seed, so chains can run in any order or in parallel.
pub fn run_chain<T: Target + ?Sized>(target: &T, config: &HmcConfig, chain: usize) -> Result<Chain> {
    config.validate()?;
    let dim = target.dim();
    let mut rng = rng::substream(config.seed, chain as u64);
    let mut point = init_point(target, config.init_radius, &mut rng)?;
    let mut inv_metric = vec![1.0; dim];
    let mut eps = reasonable_step(target, &point, &inv_metric, &mut rng);
    let mut da = DualAveraging::new(eps, config.target_accept);
    let ends = window_ends(config.tune);
    let window_start = if config.tune >= 150 { 75 } else { config.tune * 15 / 100 };
    let (mut count, mut mean, mut m2) = (0usize, vec![0.0; dim], vec![0.0; dim]);
    let mut draws = Vec::with_capacity(config.draws * dim);
    let (mut accept_sum, mut divergences) = (0.0, 0usize);
    for it in 0..config.tune + config.draws {
        let tuning = it < config.tune;
        let step = if tuning { libm::exp(da.log_eps) } else { eps };
        let jitter = 1.0 + config.step_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let t = trajectory(target, &point, &inv_metric, step * jitter, config.leapfrog_steps, &mut rng, None);
        if let Some(next) = t.next {
            point = next;
        }
        if tuning {
            da.update(t.accept);
            if it >= window_start && ends.last().is_some_and(|&e| it <= e) {
                count += 1;
                for j in 0..dim {
                    let d = point.x[j] - mean[j];
                    mean[j] += d / count as f64;
                    m2[j] += d * (point.x[j] - mean[j]);
                }
            }
            if ends.contains(&it) {
                let n = count as f64;
                for j in 0..dim {
                    let var = m2[j] / (n - 1.0).max(1.0);
                    inv_metric[j] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
                count = 0;
                mean.iter_mut().for_each(|v| *v = 0.0);
                m2.iter_mut().for_each(|v| *v = 0.0);
                let e = reasonable_step(target, &point, &inv_metric, &mut rng);
                da = DualAveraging::new(e, config.target_accept);
            }
            if it + 1 == config.tune {
                eps = libm::exp(da.log_eps_bar);
            }
        } else {
            accept_sum += t.accept;
            divergences += t.divergent as usize;
            draws.extend_from_slice(&point.x);
        }
    }
    let rate = divergences as f64 / config.draws as f64;
    if rate > config.max_divergence_rate {
        return Err(Error::TooManyDivergences { chain, rate });
    }
    Ok(Chain { dim, draws, accept_rate: accept_sum / config.draws as f64, divergences, step_size: eps, inv_metric })
}

/// All chains of `config`, in chain order.
pub fn run<T: Target + ?Sized>(target: &T, config: &HmcConfig) -> Result<Vec<Chain>> {
    (0..config.chains).map(|c| run_chain(target, config, c)).collect()
}
