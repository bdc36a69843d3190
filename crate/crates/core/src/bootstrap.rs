//! Percentile bootstrap confidence intervals with deterministic,
//! order-independent resampling.
//!
//! Each replicate draws from its own counter-based RNG stream derived from
//! `(seed, replicate index)`, so the interval is bit-identical no matter how
//! many worker threads execute the replicates.

use crate::curve::Interval;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    /// Confidence level in percent.
    pub level: f64,
}

impl BootstrapConfig {
    pub fn new(replications: usize, seed: u64) -> Self {
        BootstrapConfig {
            replications,
            seed,
            level: 95.0,
        }
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig::new(10_000, 0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BootstrapError {
    #[error("empty dataset")]
    Empty,
    #[error("unstable metric: undefined on {failed} of {total} replicates after redraws")]
    UnstableMetric { failed: usize, total: usize },
}

const MAX_REDRAWS: usize = 100;

/// Bootstraps a metric over `n_units` resampling units.
///
/// `metric` is evaluated on a with-replacement resample given as unit
/// indices; `None` marks a resample on which the metric is undefined and
/// triggers a redraw (capped at 100 per replicate). `point` is the caller's
/// estimate on the original data.
pub fn bootstrap_ci<F>(
    n_units: usize,
    point: f64,
    metric: F,
    cfg: BootstrapConfig,
) -> Result<Interval, BootstrapError>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if n_units == 0 {
        return Err(BootstrapError::Empty);
    }
    let values: Vec<Option<f64>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64 + 1);
            let mut indices = vec![0usize; n_units];
            for _ in 0..=MAX_REDRAWS {
                for slot in indices.iter_mut() {
                    *slot = rng.gen_range(0..n_units);
                }
                if let Some(v) = metric(&indices) {
                    return Some(v);
                }
            }
            None
        })
        .collect();

    let mut ok: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let failed = cfg.replications - ok.len();
    if failed * 100 > cfg.replications {
        return Err(BootstrapError::UnstableMetric {
            failed,
            total: cfg.replications,
        });
    }
    ok.sort_by(f64::total_cmp);
    let alpha = (100.0 - cfg.level) / 100.0;
    let lo = percentile_nearest_rank(&ok, alpha / 2.0 * 100.0);
    let hi = percentile_nearest_rank(&ok, (1.0 - alpha / 2.0) * 100.0);
    Ok(Interval {
        point,
        lo,
        hi,
        level: cfg.level,
        replications: cfg.replications,
    })
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile_nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (pct / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_metric_collapses() {
        let iv = bootstrap_ci(10, 0.7, |_| Some(0.7), BootstrapConfig::new(500, 1)).unwrap();
        assert_eq!((iv.point, iv.lo, iv.hi), (0.7, 0.7, 0.7));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let data = [0.1, 0.9, 0.4, 0.6, 0.2];
        let metric = |idx: &[usize]| {
            Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64)
        };
        let a = bootstrap_ci(data.len(), 0.44, metric, BootstrapConfig::new(1000, 42)).unwrap();
        let b = bootstrap_ci(data.len(), 0.44, metric, BootstrapConfig::new(1000, 42)).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_ci(data.len(), 0.44, metric, BootstrapConfig::new(1000, 43)).unwrap();
        assert_ne!((a.lo, a.hi), (c.lo, c.hi));
    }

    #[test]
    fn bounds_ordered_and_within_range() {
        let data: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let metric = |idx: &[usize]| {
            Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64)
        };
        let iv = bootstrap_ci(data.len(), 0.5, metric, BootstrapConfig::new(2000, 7)).unwrap();
        assert!(iv.lo <= iv.hi);
        assert!(iv.lo >= 0.0 && iv.hi <= 1.0);
    }

    #[test]
    fn unstable_metric_reported() {
        let err = bootstrap_ci(4, 0.0, |_| None, BootstrapConfig::new(100, 3)).unwrap_err();
        assert_eq!(
            err,
            BootstrapError::UnstableMetric {
                failed: 100,
                total: 100
            }
        );
    }

    #[test]
    fn ci_width_matches_binomial_standard_error() {
        // mean of Bernoulli(0.5), n = 100: width ~ 2 * 1.96 * 0.05
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..100)
            .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
            .collect();
        let metric = |idx: &[usize]| {
            Some(idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64)
        };
        let iv = bootstrap_ci(100, 0.5, metric, BootstrapConfig::new(4000, 11)).unwrap();
        let width = iv.hi - iv.lo;
        assert!((width - 0.196).abs() < 0.04, "width {width}");
    }
}
