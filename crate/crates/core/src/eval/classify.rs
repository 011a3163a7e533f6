//! Scoring error maps as per-pixel detectors of visible differences.

use crate::error::{Error, Result};

use super::simplex::{minimize, SimplexOptions};
use super::stats::fractional_ranks;

pub const GAMMA_RANGE: (f64, f64) = (0.1, 10.0);
pub const VISIBILITY_CUTOFF: f64 = 0.75;
pub const MCC_STEPS: usize = 1001;

/// `clamp(gain * e^gamma, 0, 1)`.
pub fn gain_gamma(e: f64, gain: f64, gamma: f64) -> f64 {
    (gain * e.powf(gamma)).clamp(0.0, 1.0)
}

/// Fits `(gain, gamma)` so that `clamp(gain * e^gamma, 0, 1)` approximates `p`
/// in least squares, with `gain > 0` and `gamma` in [`GAMMA_RANGE`].
///
/// When the optimum lies at `gain -> 0` (for example `p` all zero) the fit
/// returns the smallest gain on the search grid, `1e-12` relative to the
/// scale of `e`.
pub fn gain_gamma_fit(e: &[f64], p: &[f64]) -> Result<(f64, f64)> {
    if e.len() != p.len() {
        return Err(Error::shape(format!("{} map values for {} probabilities", e.len(), p.len())));
    }
    if e.len() < 100 {
        return Err(Error::degenerate(format!("gain-gamma fit needs at least 100 values, got {}", e.len())));
    }
    if e.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("error-map values must be finite and non-negative"));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("detection probabilities must lie in [0, 1]"));
    }
    let emax = e.iter().fold(0.0f64, |m, &v| m.max(v));
    if emax == 0.0 {
        return Err(Error::degenerate("error map is all zero"));
    }

    // Work with e / emax so the gain grid is scale free.
    let en: Vec<f64> = e.iter().map(|v| v / emax).collect();
    let (glo, ghi) = GAMMA_RANGE;
    let log_gain_bounds = (-12.0 * std::f64::consts::LN_10, 12.0 * std::f64::consts::LN_10);
    let clamp_x = |x: &[f64]| (x[0].clamp(log_gain_bounds.0, log_gain_bounds.1), x[1].clamp(glo, ghi));
    let mut objective = |x: &[f64]| {
        let (lg, gamma) = clamp_x(x);
        let g = lg.exp();
        en.iter().zip(p).map(|(&v, &t)| (gain_gamma(v, g, gamma) - t).powi(2)).sum::<f64>()
    };

    let mut best = ([0.0, 1.0], f64::INFINITY);
    for i in 0..=48 {
        let lg = log_gain_bounds.0 + (log_gain_bounds.1 - log_gain_bounds.0) * i as f64 / 48.0;
        for j in 0..=24 {
            let gamma = (glo.ln() + (ghi.ln() - glo.ln()) * j as f64 / 24.0).exp();
            let v = objective(&[lg, gamma]);
            if v < best.1 {
                best = ([lg, gamma], v);
            }
        }
    }
    let opts = SimplexOptions {
        max_evals: 4000,
        ..Default::default()
    };
    let (x, v) = minimize(&mut objective, &best.0, &[0.5, 0.2 * best.0[1]], opts);
    let (lg, gamma) = if v <= best.1 { clamp_x(&x) } else { (best.0[0], best.0[1]) };
    // Undo the normalisation: g * (e / emax)^gamma = (g / emax^gamma) * e^gamma.
    let gain = (lg - gamma * emax.ln()).exp();
    Ok((gain, gamma))
}

fn check_classes(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("both classes must be present"));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve via the rank-sum (Mann–Whitney) statistic;
/// tied scores count one half.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_classes(scores, labels)?;
    let ranks = fractional_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Matthews correlation from a confusion matrix; zero when undefined.
pub fn mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> f64 {
    let den = (tp + fp) as f64 * (tp + fn_) as f64 * (tn + fp) as f64 * (tn + fn_) as f64;
    if den == 0.0 {
        return 0.0;
    }
    (tp as f64 * tn as f64 - fp as f64 * fn_ as f64) / den.sqrt()
}

/// Best MCC over `steps` thresholds uniformly spaced on `[0, 1]`, classifying
/// `score >= threshold` as positive. Ties keep the lowest threshold.
pub fn mcc_sweep(scores: &[f64], labels: &[bool], steps: usize) -> Result<(f64, f64)> {
    check_classes(scores, labels)?;
    if steps < 2 {
        return Err(Error::invalid("threshold sweep needs at least two steps"));
    }
    let mut pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let mut neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let tp = (pos.len() - pos.partition_point(|&s| s < t)) as u64;
        let fp = (neg.len() - neg.partition_point(|&s| s < t)) as u64;
        let fn_ = pos.len() as u64 - tp;
        let tn = neg.len() as u64 - fp;
        let m = mcc(tp, tn, fp, fn_);
        if m > best.0 {
            best = (m, t);
        }
    }
    Ok(best)
}

/// Pixels marked by at least `cutoff` of observers count as visible errors.
pub fn visibility_labels(fractions: &[f64], cutoff: f64) -> Result<Vec<bool>> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::invalid(format!("marking fraction {f} outside [0, 1]")));
    }
    Ok(fractions.iter().map(|&f| f >= cutoff).collect())
}
