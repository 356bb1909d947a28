//! Convergence diagnostics over several chains of one scalar.

use alloc::vec::Vec;

use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Split each chain in half; an odd middle draw is dropped.
fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [c[..h].to_vec(), c[c.len() - h..].to_vec()]
        })
        .collect()
}

fn check(chains: &[&[f64]]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::invalid("at least two chains are required"));
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("chains must have equal length of at least four draws"));
    }
    Ok(n)
}

/// Split potential scale reduction factor.
///
/// With `B` the between-half variance and `W` the mean within-half variance
/// (divisor `n`), `R̂ = sqrt(1 + B / (n W))`, so identical halves give
/// exactly 1. Constant but different halves give `+∞`; all-constant input
/// gives NaN.
pub fn rhat(chains: &[&[f64]]) -> Result<f64> {
    check(chains)?;
    let halves = split(chains);
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&means);
    let m = halves.len() as f64;
    let b = n / (m - 1.0) * means.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n)
        .sum::<f64>()
        / m;
    Ok(if w == 0.0 {
        if b == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        libm::sqrt(1.0 + b / (n * w))
    })
}

/// Autocovariance of `x` at `lag`, divisor `len`.
fn autocov(x: &[f64], mu: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mu) * (x[i + lag] - mu)).sum::<f64>() / n as f64
}

/// Effective sample size over split chains, summing autocorrelations in
/// pairs until a pair sum turns negative (Geyer's initial positive
/// sequence) and enforcing the pairs to be non-increasing.
pub fn ess(chains: &[&[f64]]) -> Result<f64> {
    check(chains)?;
    let halves = split(chains);
    let m = halves.len() as f64;
    let n = halves[0].len();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let grand = mean(&means);
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m;
    let b_over_n = means.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>() / (m - 1.0);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return Ok(f64::NAN);
    }
    let rho = |t: usize| {
        let acov = halves.iter().zip(&means).map(|(h, &mu)| autocov(h, mu, t)).sum::<f64>() / m;
        1.0 - (w - acov) / var_plus
    };
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / libm::log10(m * n as f64));
    Ok(m * n as f64 / tau)
}

/// Mean and sample standard deviation of all draws pooled.
pub fn mean_sd(chains: &[&[f64]]) -> (f64, f64) {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let mu = mean(&all);
    let var = all.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (all.len() as f64 - 1.0).max(1.0);
    (mu, libm::sqrt(var))
}
