//! Channel-weight calibration against human ratings.
//!
//! Features are pooled once per patch, so a prediction is a cheap dot product
//! `alpha - max_p sum_c omega_c^2 s_{p,c}`. The loss is the sum over datasets
//! of `1 - PLCC(ratings, predictions)`, which is invariant to each dataset's
//! rating scale. Gradients are analytic; min-pooling contributes through the
//! active (worst) patch only.

mod adam;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::Adam;
pub use crate::eval::plcc;

use crate::error::{Error, Result};
use crate::metric::{PooledDiff, DEFAULT_ALPHA};
use crate::par;

/// How per-patch distances combine into one prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PatchPooling {
    /// The worst patch decides (the metric's definition of overall quality).
    #[default]
    Min,
    /// Average distance over patches.
    Mean,
}

/// Pooled features of every patch of one distorted video plus its rating.
#[derive(Clone, Debug)]
pub struct RatedSample {
    pub video_id: String,
    pub dataset_id: String,
    patches: Vec<Vec<f64>>,
    pub dmos: f64,
}

impl RatedSample {
    pub fn new(
        video_id: impl Into<String>,
        dataset_id: impl Into<String>,
        per_patch: &[PooledDiff],
        dmos: f64,
    ) -> Result<Self> {
        let patches: Vec<Vec<f64>> = per_patch.iter().map(PooledDiff::flat).collect();
        Self::from_flat(video_id, dataset_id, patches, dmos)
    }

    /// Builds a sample from flat per-patch channel vectors.
    pub fn from_flat(
        video_id: impl Into<String>,
        dataset_id: impl Into<String>,
        patches: Vec<Vec<f64>>,
        dmos: f64,
    ) -> Result<Self> {
        let video_id = video_id.into();
        if patches.is_empty() {
            return Err(Error::invalid(format!("sample `{video_id}` has no patches")));
        }
        let c = patches[0].len();
        if patches.iter().any(|p| p.len() != c) {
            return Err(Error::shape(format!("sample `{video_id}` mixes channel counts")));
        }
        if patches.iter().flatten().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid(format!("sample `{video_id}` has invalid pooled values")));
        }
        if !dmos.is_finite() {
            return Err(Error::invalid(format!("sample `{video_id}` has a non-finite rating")));
        }
        Ok(Self {
            video_id,
            dataset_id: dataset_id.into(),
            patches,
            dmos,
        })
    }

    pub fn channels(&self) -> usize {
        self.patches[0].len()
    }

    pub fn patches(&self) -> &[Vec<f64>] {
        &self.patches
    }

    /// Predicted distance and, for min-pooling, the index of the active patch.
    fn distance(&self, omega: &[f64], pooling: PatchPooling) -> (f64, Option<usize>) {
        let dist = |p: &[f64]| p.iter().zip(omega).map(|(s, w)| w * w * s).sum::<f64>();
        match pooling {
            PatchPooling::Min => {
                let mut best = (f64::NEG_INFINITY, 0);
                for (i, p) in self.patches.iter().enumerate() {
                    let d = dist(p);
                    if d > best.0 {
                        best = (d, i);
                    }
                }
                (best.0, Some(best.1))
            }
            PatchPooling::Mean => {
                let total: f64 = self.patches.iter().map(|p| dist(p)).sum();
                (total / self.patches.len() as f64, None)
            }
        }
    }

    /// Pooled features that the prediction depends on linearly through `omega^2`.
    fn active_features(&self, active: Option<usize>) -> Vec<f64> {
        match active {
            Some(i) => self.patches[i].clone(),
            None => {
                let n = self.patches.len() as f64;
                let mut mean = vec![0.0; self.channels()];
                for p in &self.patches {
                    for (m, s) in mean.iter_mut().zip(p) {
                        *m += s;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                mean
            }
        }
    }
}

fn check_channels(samples: &[RatedSample], omega: &[f64]) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.channels() != omega.len()) {
        return Err(Error::shape(format!(
            "sample `{}` has {} channels, omega has {}",
            s.video_id,
            s.channels(),
            omega.len()
        )));
    }
    Ok(())
}

/// Predicted quality of every sample.
pub fn predict_batch(samples: &[RatedSample], omega: &[f64], alpha: f64, pooling: PatchPooling) -> Result<Vec<f64>> {
    check_channels(samples, omega)?;
    Ok(par::map_indices(samples.len(), |i| alpha - samples[i].distance(omega, pooling).0))
}

/// Samples grouped by dataset, in dataset-id order.
fn group_by_dataset(samples: &[RatedSample]) -> Result<Vec<(String, Vec<&RatedSample>)>> {
    let mut groups: BTreeMap<&str, Vec<&RatedSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(&s.dataset_id).or_default().push(s);
    }
    if groups.is_empty() {
        return Err(Error::degenerate("no samples"));
    }
    groups
        .into_iter()
        .map(|(id, group)| {
            if group.len() < 3 {
                return Err(Error::degenerate(format!(
                    "dataset `{id}` has {} samples; at least 3 are needed",
                    group.len()
                )));
            }
            let first = group[0].dmos;
            if group.iter().all(|s| s.dmos == first) {
                return Err(Error::degenerate(format!("dataset `{id}` has constant ratings")));
            }
            Ok((id.to_string(), group))
        })
        .collect()
}

/// `sum over datasets of (1 - PLCC(h, q))` and its gradient with respect to omega.
///
/// A dataset whose predictions are all equal contributes a loss of one and
/// no gradient.
pub fn loss_and_grad(
    samples: &[RatedSample],
    omega: &[f64],
    alpha: f64,
    pooling: PatchPooling,
) -> Result<(f64, Vec<f64>)> {
    evaluate(samples, omega, alpha, pooling, true)
}

/// The calibration loss alone.
pub fn loss(samples: &[RatedSample], omega: &[f64], alpha: f64, pooling: PatchPooling) -> Result<f64> {
    evaluate(samples, omega, alpha, pooling, false).map(|(l, _)| l)
}

fn evaluate(
    samples: &[RatedSample],
    omega: &[f64],
    alpha: f64,
    pooling: PatchPooling,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    check_channels(samples, omega)?;
    let groups = group_by_dataset(samples)?;
    let mut total = 0.0;
    let mut grad = vec![0.0; if with_grad { omega.len() } else { 0 }];

    for (_, group) in &groups {
        let preds = par::map_indices(group.len(), |i| group[i].distance(omega, pooling));
        let q: Vec<f64> = preds.iter().map(|(d, _)| alpha - d).collect();
        let h: Vec<f64> = group.iter().map(|s| s.dmos).collect();
        let n = q.len() as f64;
        let mq = q.iter().sum::<f64>() / n;
        let mh = h.iter().sum::<f64>() / n;
        let (mut sqh, mut sqq, mut shh) = (0.0, 0.0, 0.0);
        for (&qi, &hi) in q.iter().zip(&h) {
            sqh += (qi - mq) * (hi - mh);
            sqq += (qi - mq) * (qi - mq);
            shh += (hi - mh) * (hi - mh);
        }
        if sqq == 0.0 {
            total += 1.0;
            continue;
        }
        let denom = (sqq * shh).sqrt();
        total += 1.0 - sqh / denom;
        if !with_grad {
            continue;
        }
        // dr/dq_i of the Pearson quotient.
        let dr: Vec<f64> = q
            .iter()
            .zip(&h)
            .map(|(&qi, &hi)| ((hi - mh) - sqh / sqq * (qi - mq)) / denom)
            .collect();
        let feats: Vec<Vec<f64>> = group.iter().zip(&preds).map(|(s, (_, a))| s.active_features(*a)).collect();
        // loss = 1 - r, q_i = alpha - sum omega^2 s_i  =>  dloss/domega_c = sum_i dr_i * 2 omega_c s_ic
        let contrib = par::map_indices(omega.len(), |c| {
            let acc: f64 = dr.iter().zip(&feats).map(|(d, f)| d * f[c]).sum();
            2.0 * omega[c] * acc
        });
        for (g, v) in grad.iter_mut().zip(contrib) {
            *g += v;
        }
    }
    if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("calibration loss or gradient is not finite".into()));
    }
    Ok((total, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub alpha: f64,
    pub seed: u64,
    pub omega_init: f64,
    /// Half-width of a seeded uniform perturbation added to the initial
    /// weights; zero starts every run from the same point.
    pub init_jitter: f64,
    pub pooling: PatchPooling,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-6,
            epochs: 100_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            omega_init: 1.0,
            init_jitter: 0.0,
            pooling: PatchPooling::Min,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Clone, Debug)]
pub struct CalibrationResult {
    /// Weights at the epoch with the lowest test loss.
    pub omega_best: Vec<f64>,
    pub best_epoch: usize,
    /// Weights after the last optimiser step.
    pub omega_final: Vec<f64>,
    pub history: Vec<EpochRecord>,
}

/// Full-batch Adam on the PLCC loss, keeping the weights with the lowest test loss.
pub fn calibrate(train: &[RatedSample], test: &[RatedSample], cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    if cfg.learning_rate.is_nan() || cfg.learning_rate < 0.0 || !cfg.learning_rate.is_finite() {
        return Err(Error::invalid("learning rate must be finite and non-negative"));
    }
    if cfg.epochs == 0 {
        return Err(Error::invalid("at least one epoch is required"));
    }
    let dim = train
        .first()
        .map(RatedSample::channels)
        .ok_or_else(|| Error::degenerate("empty training split"))?;

    let mut omega = vec![cfg.omega_init; dim];
    if cfg.init_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for w in &mut omega {
            *w += rng.gen_range(-cfg.init_jitter..=cfg.init_jitter);
        }
    }
    // Surface degenerate splits before any optimisation.
    loss(train, &omega, cfg.alpha, cfg.pooling)?;
    loss(test, &omega, cfg.alpha, cfg.pooling)?;

    let mut adam = Adam::new(dim, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0, omega.clone());
    for epoch in 0..cfg.epochs {
        let (train_loss, grad) = loss_and_grad(train, &omega, cfg.alpha, cfg.pooling)?;
        let test_loss = loss(test, &omega, cfg.alpha, cfg.pooling)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            test_loss,
        });
        if test_loss < best.0 {
            best = (test_loss, epoch, omega.clone());
        }
        adam.step(&mut omega, &grad);
    }
    Ok(CalibrationResult {
        omega_best: best.2,
        best_epoch: best.1,
        omega_final: omega,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: usize, ds: &str, patches: Vec<Vec<f64>>, dmos: f64) -> RatedSample {
        RatedSample::from_flat(format!("v{id}"), ds, patches, dmos).unwrap()
    }

    #[test]
    fn plcc_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((plcc(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((plcc(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((plcc(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(plcc(&a, &[2.0; 4]), Err(Error::Degenerate(_))));
        assert!(plcc(&a, &[1.0]).is_err());
    }

    #[test]
    fn predictions_min_pool_over_patches() {
        let s = sample(0, "d", vec![vec![1.0, 0.0], vec![3.0, 0.0]], 50.0);
        let q = predict_batch(std::slice::from_ref(&s), &[1.0, 1.0], 100.0, PatchPooling::Min).unwrap();
        assert_eq!(q, vec![97.0]);
        let q = predict_batch(&[s], &[1.0, 1.0], 100.0, PatchPooling::Mean).unwrap();
        assert_eq!(q, vec![98.0]);
        let z = sample(1, "d", vec![vec![0.0; 2]], 1.0);
        assert_eq!(predict_batch(&[z], &[3.0, -2.0], 100.0, PatchPooling::Min).unwrap(), vec![100.0]);
    }

    #[test]
    fn perfect_ratings_give_zero_loss() {
        let samples: Vec<_> = (0..5)
            .map(|i| {
                let s = i as f64 * 0.1;
                sample(i, "d", vec![vec![s, 2.0 * s]], 3.0 * (100.0 - 5.0 * s) + 7.0)
            })
            .collect();
        let (l, g) = loss_and_grad(&samples, &[1.0, 2.0], 100.0, PatchPooling::Min).unwrap();
        assert!(l.abs() < 1e-12, "{l}");
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn constant_predictions_contribute_one() {
        let samples: Vec<_> = (0..4).map(|i| sample(i, "d", vec![vec![0.5]], i as f64)).collect();
        let (l, g) = loss_and_grad(&samples, &[1.0], 100.0, PatchPooling::Min).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn degenerate_groups_are_rejected() {
        let two: Vec<_> = (0..2).map(|i| sample(i, "d", vec![vec![i as f64]], i as f64)).collect();
        assert!(matches!(loss(&two, &[1.0], 100.0, PatchPooling::Min), Err(Error::Degenerate(_))));
        let flat: Vec<_> = (0..4).map(|i| sample(i, "d", vec![vec![i as f64]], 5.0)).collect();
        assert!(matches!(loss(&flat, &[1.0], 100.0, PatchPooling::Min), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let samples: Vec<_> = (0..6)
            .map(|i| sample(i, "d", vec![vec![i as f64 * 0.1, 0.3]], 100.0 - i as f64 + (i % 2) as f64))
            .collect();
        let cfg = CalibrationConfig {
            learning_rate: 0.0,
            epochs: 10,
            ..Default::default()
        };
        let r = calibrate(&samples, &samples, &cfg).unwrap();
        assert_eq!(r.omega_best, vec![1.0, 1.0]);
        assert_eq!(r.omega_final, vec![1.0, 1.0]);
        let first = r.history[0];
        assert!(r.history.iter().all(|e| e.train_loss == first.train_loss && e.test_loss == first.test_loss));
    }
}
