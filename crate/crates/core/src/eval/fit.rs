//! Five-parameter logistic mapping from metric predictions to ratings:
//! `h = e1 * (0.5 - 1 / (1 + exp(e2 * (q - e3)))) + e4 * q + e5`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::simplex::{minimize, SimplexOptions};
use super::stats::median;

/// Slopes of the multi-start grid, expressed for predictions spanning 100 units.
pub const SLOPE_GRID: [f64; 3] = [0.01, 0.1, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    pub eta5: f64,
}

impl FitParams {
    pub fn identity() -> Self {
        Self {
            eta1: 0.0,
            eta2: 0.0,
            eta3: 0.0,
            eta4: 1.0,
            eta5: 0.0,
        }
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.eta1 * (0.5 - 1.0 / (1.0 + (self.eta2 * (q - self.eta3)).exp())) + self.eta4 * q + self.eta5
    }

    fn is_finite(&self) -> bool {
        [self.eta1, self.eta2, self.eta3, self.eta4, self.eta5]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub fn apply_fit(params: &FitParams, q: &[f64]) -> Vec<f64> {
    q.iter().map(|&x| params.eval(x)).collect()
}

fn sse(params: &FitParams, q: &[f64], h: &[f64]) -> f64 {
    q.iter().zip(h).map(|(&x, &y)| (params.eval(x) - y).powi(2)).sum()
}

/// Least-squares line through `(q, h)`: returns `(slope, intercept)`.
fn affine(q: &[f64], h: &[f64]) -> (f64, f64) {
    let n = q.len() as f64;
    let mq = q.iter().sum::<f64>() / n;
    let mh = h.iter().sum::<f64>() / n;
    let sqq: f64 = q.iter().map(|x| (x - mq) * (x - mq)).sum();
    let sqh: f64 = q.iter().zip(h).map(|(x, y)| (x - mq) * (y - mh)).sum();
    let slope = if sqq > 0.0 { sqh / sqq } else { 0.0 };
    (slope, mh - slope * mq)
}

/// Affine transform to standardised coordinates and back.
struct Frame {
    mq: f64,
    sq: f64,
    mh: f64,
    sh: f64,
}

impl Frame {
    fn new(q: &[f64], h: &[f64]) -> Self {
        let n = q.len() as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let sd = |v: &[f64], m: f64| (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
        let (mq, mh) = (mean(q), mean(h));
        let (sq, sh) = (sd(q, mq), sd(h, mh));
        Self {
            mq,
            sq: if sq > 0.0 { sq } else { 1.0 },
            mh,
            sh: if sh > 0.0 { sh } else { 1.0 },
        }
    }

    fn to_raw(&self, z: &[f64]) -> FitParams {
        FitParams {
            eta1: self.sh * z[0],
            eta2: z[1] / self.sq,
            eta3: self.mq + self.sq * z[2],
            eta4: self.sh * z[3] / self.sq,
            eta5: self.sh * (z[4] - z[3] * self.mq / self.sq) + self.mh,
        }
    }

    fn to_std(&self, p: &FitParams) -> [f64; 5] {
        [
            p.eta1 / self.sh,
            p.eta2 * self.sq,
            (p.eta3 - self.mq) / self.sq,
            p.eta4 * self.sq / self.sh,
            (p.eta5 - self.mh) / self.sh + p.eta4 * self.mq / self.sh,
        ]
    }
}

fn check_inputs(q: &[f64], h: &[f64]) -> Result<()> {
    if q.len() != h.len() {
        return Err(Error::shape(format!("{} predictions for {} ratings", q.len(), h.len())));
    }
    if q.len() < 6 {
        return Err(Error::degenerate(format!("logistic fit needs at least 6 points, got {}", q.len())));
    }
    if q.iter().chain(h).any(|v| !v.is_finite()) {
        return Err(Error::invalid("logistic fit inputs must be finite"));
    }
    if h.iter().all(|&v| v == h[0]) {
        return Err(Error::degenerate("logistic fit on constant ratings"));
    }
    Ok(())
}

/// Runs the simplex from each standardised start and keeps the best result,
/// never doing worse than the exact affine fit.
fn fit_from_starts(
    q: &[f64],
    h: &[f64],
    frame: &Frame,
    starts: &[[f64; 5]],
    opts: SimplexOptions,
) -> Result<FitParams> {
    let zq: Vec<f64> = q.iter().map(|x| (x - frame.mq) / frame.sq).collect();
    let zh: Vec<f64> = h.iter().map(|y| (y - frame.mh) / frame.sh).collect();
    let mut objective = |z: &[f64]| {
        let p = FitParams {
            eta1: z[0],
            eta2: z[1],
            eta3: z[2],
            eta4: z[3],
            eta5: z[4],
        };
        sse(&p, &zq, &zh)
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let step = [0.5, (0.5 * start[1].abs()).max(0.05), 0.5, 0.1, 0.1];
        let (mut x, mut v) = minimize(&mut objective, start, &step, opts);
        // Restart from the optimum until it stops improving.
        for _ in 0..3 {
            let step: Vec<f64> = x.iter().zip(&step).map(|(xi, s)| (0.1 * xi.abs()).max(0.1 * s)).collect();
            let (x2, v2) = minimize(&mut objective, &x, &step, opts);
            let gained = v - v2;
            if v2 < v {
                x = x2;
                v = v2;
            }
            if gained <= 1e-14 * (1.0 + v.abs()) {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
    }

    let (slope, intercept) = affine(q, h);
    let affine_fit = FitParams {
        eta1: 0.0,
        eta2: 0.0,
        eta3: median(q),
        eta4: slope,
        eta5: intercept,
    };
    let candidate = best.map(|(x, _)| frame.to_raw(&x)).filter(FitParams::is_finite);
    Ok(match candidate {
        Some(c) if sse(&c, q, h) <= sse(&affine_fit, q, h) => c,
        _ => affine_fit,
    })
}

/// Least-squares fit of the five-parameter logistic.
///
/// Starts: every combination of slope in [`SLOPE_GRID`] (scaled to the
/// prediction range) and midpoint at the minimum, median and maximum
/// prediction, plus the affine solution. The returned fit is never worse
/// than the best affine fit.
pub fn logistic_fit(q: &[f64], h: &[f64]) -> Result<FitParams> {
    check_inputs(q, h)?;
    let frame = Frame::new(q, h);
    let (qmin, qmax) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = if qmax > qmin { qmax - qmin } else { 1.0 };
    let (slope, _) = affine(q, h);
    let sign = if slope < 0.0 { -1.0 } else { 1.0 };
    let hrange = h.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - h.iter().fold(f64::INFINITY, |m, &v| m.min(v));

    let mut starts = Vec::with_capacity(10);
    for &k in &SLOPE_GRID {
        for mid in [qmin, median(q), qmax] {
            let raw = FitParams {
                eta1: sign * hrange,
                eta2: k * 100.0 / range,
                eta3: mid,
                eta4: 0.0,
                eta5: frame.mh,
            };
            starts.push(frame.to_std(&raw));
        }
    }
    let z_slope = slope * frame.sq / frame.sh;
    starts.push([0.0, 1.0, 0.0, z_slope, 0.0]);
    fit_from_starts(q, h, &frame, &starts, SimplexOptions::default())
}

/// Refit started from a previous solution (and the affine start), used
/// inside bootstrap resampling.
pub fn logistic_fit_from(q: &[f64], h: &[f64], start: &FitParams) -> Result<FitParams> {
    check_inputs(q, h)?;
    let frame = Frame::new(q, h);
    let (slope, _) = affine(q, h);
    let warm = frame.to_std(start);
    let mut starts = vec![[0.0, 1.0, 0.0, slope * frame.sq / frame.sh, 0.0]];
    if warm.iter().all(|v| v.is_finite()) {
        starts.insert(0, warm);
    }
    let opts = SimplexOptions {
        max_evals: 5_000,
        f_tol: 1e-12,
        x_tol: 1e-8,
    };
    fit_from_starts(q, h, &frame, &starts, opts)
}
