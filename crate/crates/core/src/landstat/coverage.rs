use alloc::boxed::Box;
use alloc::vec::Vec;

use super::stats::{Statistic, StatisticVector};
use crate::error::{Error, Result};
use crate::raster::{CategoricalRaster, PixelMask};

pub const DEFAULT_PERCENTILES: [f64; 3] = [50.0, 90.0, 95.0];

/// Temperatures evaluated by default, including 1.1.
pub const DEFAULT_TEMPERATURES: [f64; 6] = [0.25, 0.5, 1.0, 1.1, 1.25, 1.5];

/// Anything that can draw completions of a partially observed raster.
pub trait CompletionSampler {
    fn complete(
        &self,
        image: &CategoricalRaster,
        mask: &PixelMask,
        count: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<CategoricalRaster>>;
}

impl<S: CompletionSampler + ?Sized> CompletionSampler for &S {
    fn complete(
        &self,
        image: &CategoricalRaster,
        mask: &PixelMask,
        count: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<CategoricalRaster>> {
        (**self).complete(image, mask, count, temperature, seed)
    }
}

/// Empirical percentile of sorted data with linear interpolation between
/// order statistics (`q` in percent).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Whether one truth's statistics fell inside each central band, for one
/// temperature. Indexed `[statistic][percentile]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthOutcome {
    pub temperature: f64,
    pub inside: [[bool; 3]; 4],
}

/// Draws completions for one truth and checks each statistic against the
/// equal-tailed band of each percentile (endpoints inclusive).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_truth<S: CompletionSampler>(
    image_id: usize,
    image: &CategoricalRaster,
    mask: &PixelMask,
    sampler: &S,
    samples: usize,
    percentiles: &[f64; 3],
    temperature: f64,
    seed: u64,
) -> Result<TruthOutcome> {
    if samples < 20 {
        return Err(Error::invalid("coverage needs at least 20 samples per image"));
    }
    let completions = sampler
        .complete(image, mask, samples, temperature, seed)
        .map_err(|e| Error::SamplerFailed { image: image_id, source: Box::new(e) })?;
    let truth = StatisticVector::of(image);
    let sampled: Vec<StatisticVector> = completions.iter().map(StatisticVector::of).collect();
    let mut inside = [[false; 3]; 4];
    for (s, stat) in Statistic::ALL.iter().enumerate() {
        let mut values: Vec<f64> = sampled.iter().map(|v| v.get(*stat)).collect();
        values.sort_by(f64::total_cmp);
        let t = truth.get(*stat);
        for (p, &q) in percentiles.iter().enumerate() {
            let lo = percentile(&values, (100.0 - q) / 2.0);
            let hi = percentile(&values, (100.0 + q) / 2.0);
            inside[s][p] = lo <= t && t <= hi;
        }
    }
    Ok(TruthOutcome { temperature, inside })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoverageRow {
    pub statistic: Statistic,
    pub percentile: f64,
    pub temperature: f64,
    pub coverage: f64,
}

/// Empirical coverage per (statistic, percentile, temperature).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub images: usize,
    pub samples_per_image: usize,
}

impl CoverageReport {
    /// Aggregates outcomes; `outcomes[t]` holds every truth at temperature
    /// `temperatures[t]`.
    pub fn from_outcomes(
        temperatures: &[f64],
        percentiles: &[f64; 3],
        outcomes: &[Vec<TruthOutcome>],
        samples_per_image: usize,
    ) -> Self {
        let images = outcomes.first().map_or(0, Vec::len);
        let mut rows = Vec::new();
        for (s, &statistic) in Statistic::ALL.iter().enumerate() {
            for (p, &percentile) in percentiles.iter().enumerate() {
                for (t, &temperature) in temperatures.iter().enumerate() {
                    let hits = outcomes[t].iter().filter(|o| o.inside[s][p]).count();
                    rows.push(CoverageRow {
                        statistic,
                        percentile,
                        temperature,
                        coverage: hits as f64 / images.max(1) as f64,
                    });
                }
            }
        }
        Self { rows, images, samples_per_image }
    }

    pub fn get(&self, statistic: Statistic, percentile: f64, temperature: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.statistic == statistic && r.percentile == percentile && r.temperature == temperature)
            .map(|r| r.coverage)
    }
}

/// Sequential coverage evaluation. Truth `i` at temperature index `t` uses
/// seed `seed + i`, so results match any parallel split over truths.
pub fn coverage<S: CompletionSampler>(
    truths: &[(CategoricalRaster, PixelMask)],
    sampler: &S,
    samples_per_image: usize,
    percentiles: &[f64; 3],
    temperatures: &[f64],
    seed: u64,
) -> Result<CoverageReport> {
    if truths.is_empty() {
        return Err(Error::Empty("coverage truths"));
    }
    let mut outcomes = Vec::with_capacity(temperatures.len());
    for &temperature in temperatures {
        let mut per_t = Vec::with_capacity(truths.len());
        for (i, (image, mask)) in truths.iter().enumerate() {
            per_t.push(evaluate_truth(
                i,
                image,
                mask,
                sampler,
                samples_per_image,
                percentiles,
                temperature,
                seed.wrapping_add(i as u64),
            )?);
        }
        outcomes.push(per_t);
    }
    Ok(CoverageReport::from_outcomes(temperatures, percentiles, &outcomes, samples_per_image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    struct Oracle;

    impl CompletionSampler for Oracle {
        fn complete(
            &self,
            image: &CategoricalRaster,
            _mask: &PixelMask,
            count: usize,
            _temperature: f64,
            _seed: u64,
        ) -> Result<Vec<CategoricalRaster>> {
            Ok(vec![image.clone(); count])
        }
    }

    struct Broken;

    impl CompletionSampler for Broken {
        fn complete(
            &self,
            _: &CategoricalRaster,
            _: &PixelMask,
            _: usize,
            _: f64,
            _: u64,
        ) -> Result<Vec<CategoricalRaster>> {
            Err(Error::BadTemperature(-1.0))
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert!((percentile(&v, 12.5) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn sampler_returning_truth_covers_everything() {
        let img = CategoricalRaster::new(3, 3, 3, vec![0, 1, 2, 0, 1, 2, 2, 2, 2]).unwrap();
        let truths = vec![(img, PixelMask::all_missing(3, 3)); 4];
        let report = coverage(&truths, &Oracle, 20, &DEFAULT_PERCENTILES, &[1.0, 1.5], 0).unwrap();
        assert_eq!(report.rows.len(), 4 * 3 * 2);
        assert!(report.rows.iter().all(|r| r.coverage == 1.0));
        assert_eq!(report.get(Statistic::Adjacency, 90.0, 1.5), Some(1.0));
    }

    #[test]
    fn too_few_samples_and_failures_are_reported() {
        let img = CategoricalRaster::filled(2, 2, 2, 0).unwrap();
        let truths = vec![(img, PixelMask::all_missing(2, 2))];
        assert!(coverage(&truths, &Oracle, 19, &DEFAULT_PERCENTILES, &[1.0], 0).is_err());
        let err = coverage(&truths, &Broken, 20, &DEFAULT_PERCENTILES, &[1.0], 0).unwrap_err();
        assert!(matches!(err, Error::SamplerFailed { image: 0, .. }));
    }
}
