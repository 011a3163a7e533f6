use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

use super::fit::{apply_fit, logistic_fit, logistic_fit_from, FitParams};
use super::stats::{krcc, plcc, quantile_sorted, rmse, srcc};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Plcc,
    Srcc,
    Krcc,
    Rmse,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Plcc, Statistic::Srcc, Statistic::Krcc, Statistic::Rmse];

    fn uses_fit(self) -> bool {
        matches!(self, Statistic::Plcc | Statistic::Rmse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapConfig {
    pub iters: usize,
    pub seed: u64,
    /// Refit the logistic mapping inside every resample before computing
    /// PLCC and RMSE. Rank statistics always use raw predictions.
    pub fit: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            iters: 1000,
            seed: 0,
            fit: true,
        }
    }
}

/// Largest fraction of resamples that may be degenerate.
const MAX_SKIPPED: f64 = 0.1;

/// Statistic values on one dataset, `None` when degenerate.
fn statistics(q: &[f64], h: &[f64], which: &[Statistic], fit: Option<&FitParams>) -> Vec<Option<f64>> {
    let fitted = match fit {
        Some(start) if which.iter().any(|s| s.uses_fit()) => {
            logistic_fit_from(q, h, start).ok().map(|p| apply_fit(&p, q))
        }
        _ => None,
    };
    which
        .iter()
        .map(|s| {
            let pred = if s.uses_fit() && fit.is_some() {
                fitted.as_deref()?
            } else {
                q
            };
            match s {
                Statistic::Plcc => plcc(pred, h),
                Statistic::Srcc => srcc(q, h),
                Statistic::Krcc => krcc(q, h),
                Statistic::Rmse => rmse(pred, h),
            }
            .ok()
        })
        .collect()
}

/// Percentile-method 95% intervals for each requested statistic, resampling
/// video pairs with replacement. Iteration `i` draws from a generator seeded
/// with `seed + i`, so results do not depend on scheduling.
pub fn bootstrap_intervals(
    q: &[f64],
    h: &[f64],
    which: &[Statistic],
    cfg: &BootstrapConfig,
) -> Result<Vec<(f64, f64)>> {
    if q.len() != h.len() {
        return Err(Error::shape(format!("{} predictions for {} ratings", q.len(), h.len())));
    }
    if q.len() < 8 {
        return Err(Error::degenerate(format!("bootstrap needs at least 8 pairs, got {}", q.len())));
    }
    if cfg.iters < 100 {
        return Err(Error::invalid(format!("bootstrap needs at least 100 iterations, got {}", cfg.iters)));
    }
    let full_fit = if cfg.fit && which.iter().any(|s| s.uses_fit()) {
        Some(logistic_fit(q, h)?)
    } else {
        None
    };

    let n = q.len();
    let draws = par::map_indices(cfg.iters, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let qs: Vec<f64> = idx.iter().map(|&k| q[k]).collect();
        let hs: Vec<f64> = idx.iter().map(|&k| h[k]).collect();
        statistics(&qs, &hs, which, full_fit.as_ref())
    });

    which
        .iter()
        .enumerate()
        .map(|(k, stat)| {
            let mut values: Vec<f64> = draws.iter().filter_map(|d| d[k]).collect();
            let skipped = cfg.iters - values.len();
            if skipped > 0 {
                warn!("bootstrap {stat:?}: skipped {skipped} of {} degenerate resamples", cfg.iters);
            }
            if skipped as f64 > MAX_SKIPPED * cfg.iters as f64 {
                return Err(Error::degenerate(format!(
                    "bootstrap {stat:?}: {skipped} of {} resamples were degenerate",
                    cfg.iters
                )));
            }
            values.sort_by(f64::total_cmp);
            Ok((quantile_sorted(&values, 0.025), quantile_sorted(&values, 0.975)))
        })
        .collect()
}

/// 95% interval of one statistic.
pub fn bootstrap_ci(q: &[f64], h: &[f64], statistic: Statistic, cfg: &BootstrapConfig) -> Result<(f64, f64)> {
    Ok(bootstrap_intervals(q, h, &[statistic], cfg)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_data(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let h: Vec<f64> = q.iter().map(|x| 0.5 * x + rng.gen_range(-10.0..10.0)).collect();
        (q, h)
    }

    #[test]
    fn deterministic_and_contains_full_sample() {
        let (q, h) = linear_data(40, 3);
        let cfg = BootstrapConfig {
            iters: 200,
            seed: 11,
            fit: false,
        };
        let a = bootstrap_ci(&q, &h, Statistic::Plcc, &cfg).unwrap();
        let b = bootstrap_ci(&q, &h, Statistic::Plcc, &cfg).unwrap();
        assert_eq!(a, b);
        let full = plcc(&q, &h).unwrap();
        assert!(a.0 <= full && full <= a.1, "{a:?} vs {full}");
    }

    #[test]
    fn equal_data_has_zero_width() {
        let q = vec![5.0; 10];
        let cfg = BootstrapConfig {
            iters: 100,
            seed: 0,
            fit: false,
        };
        assert_eq!(bootstrap_ci(&q, &q, Statistic::Rmse, &cfg).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn too_many_degenerate_resamples_is_an_error() {
        let q = vec![5.0; 10];
        let h: Vec<f64> = (0..10).map(f64::from).collect();
        let cfg = BootstrapConfig {
            iters: 100,
            seed: 0,
            fit: false,
        };
        assert!(matches!(bootstrap_ci(&q, &h, Statistic::Srcc, &cfg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn preconditions() {
        let (q, h) = linear_data(7, 0);
        assert!(bootstrap_ci(&q, &h, Statistic::Plcc, &BootstrapConfig::default()).is_err());
        let (q, h) = linear_data(10, 0);
        let cfg = BootstrapConfig {
            iters: 50,
            ..Default::default()
        };
        assert!(bootstrap_ci(&q, &h, Statistic::Plcc, &cfg).is_err());
    }
}
