//! Percentile bootstrap over report-granularity resamples.
//!
//! Each resample draws its own RNG stream from (seed, resample index), so
//! results are independent of evaluation order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::metrics::MetricsError;

/// Point value with a 95% percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapCi {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// RNG for one resample, derived from the base seed and the resample index.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Linear-interpolation quantile of pre-sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Bootstrap a metric defined over item indices. The metric receives a
/// multiset of indices into the corpus and may return `None` when undefined
/// on that resample; such resamples are dropped from the percentiles. With
/// `n_resamples == 0` the interval degenerates to the point value.
pub fn bootstrap_ci<F>(
    n_items: usize,
    metric: F,
    n_resamples: usize,
    seed: u64,
) -> Result<Option<BootstrapCi>, MetricsError>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if n_items == 0 {
        return Err(MetricsError::EmptyCorpus);
    }
    let full: Vec<usize> = (0..n_items).collect();
    let Some(value) = metric(&full) else {
        return Ok(None);
    };
    if n_resamples == 0 {
        return Ok(Some(BootstrapCi {
            value,
            ci_low: value,
            ci_high: value,
        }));
    }
    let mut resampled = Vec::with_capacity(n_resamples);
    let mut indices = vec![0usize; n_items];
    for resample in 0..n_resamples {
        let mut rng = stream_rng(seed, resample as u64);
        for slot in indices.iter_mut() {
            *slot = rng.gen_range(0..n_items);
        }
        if let Some(v) = metric(&indices) {
            resampled.push(v);
        }
    }
    if resampled.is_empty() {
        return Ok(Some(BootstrapCi {
            value,
            ci_low: value,
            ci_high: value,
        }));
    }
    resampled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Some(BootstrapCi {
        value,
        ci_low: quantile(&resampled, 0.025),
        ci_high: quantile(&resampled, 0.975),
    }))
}

/// Bootstrap the mean of a plain sample.
pub fn bootstrap_mean(
    values: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapCi, MetricsError> {
    let ci = bootstrap_ci(
        values.len(),
        |idxs| {
            let sum: f64 = idxs.iter().map(|&i| values[i]).sum();
            Some(sum / idxs.len() as f64)
        },
        n_resamples,
        seed,
    )?;
    Ok(ci.expect("mean is defined on every resample"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_metric_has_degenerate_interval() {
        let values = vec![0.7; 50];
        let ci = bootstrap_mean(&values, 200, 7).unwrap();
        assert!((ci.value - 0.7).abs() < 1e-12);
        assert_eq!(ci.ci_low, ci.value);
        assert_eq!(ci.ci_high, ci.value);
    }

    #[test]
    fn same_seed_is_deterministic() {
        let values: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let a = bootstrap_mean(&values, 300, 42).unwrap();
        let b = bootstrap_mean(&values, 300, 42).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_mean(&values, 300, 43).unwrap();
        assert_ne!((a.ci_low, a.ci_high), (c.ci_low, c.ci_high));
    }

    #[test]
    fn bernoulli_half_width_matches_binomial_approximation() {
        // p=0.5, n=1000: normal-approximation half-width ~ 1.96*sqrt(p(1-p)/n)
        // = 0.031; assert within +-0.01.
        let values: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let ci = bootstrap_mean(&values, 1000, 11).unwrap();
        let half_width = (ci.ci_high - ci.ci_low) / 2.0;
        assert!(
            (half_width - 0.031).abs() < 0.01,
            "half width {half_width}"
        );
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            bootstrap_mean(&[], 10, 0),
            Err(MetricsError::EmptyCorpus)
        ));
    }

    #[test]
    fn quantile_interpolates() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&sorted, 0.0), 1.0);
        assert_eq!(quantile(&sorted, 1.0), 4.0);
        assert_eq!(quantile(&sorted, 0.5), 2.5);
    }
}
