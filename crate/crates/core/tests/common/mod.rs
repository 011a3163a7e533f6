//! Independent reference implementations used by the integration tests.
//! Everything here is written as plainly as possible, in f64, without
//! reusing library code paths.

#![allow(dead_code)]

use cgvqm::VideoTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f32, hi: f32) -> VideoTensor {
    VideoTensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Direct seven-loop 3-D convolution (plus the bias), zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv_oracle(
    x: &VideoTensor,
    out_channels: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    weights: &[f32],
    bias: &[f32],
) -> (Vec<usize>, Vec<f64>) {
    let [c_in, f, h, w] = x.shape();
    let ext = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p - k) / s + 1;
    let (of, oh, ow) = (
        ext(f, kernel[0], stride[0], pad[0]),
        ext(h, kernel[1], stride[1], pad[1]),
        ext(w, kernel[2], stride[2], pad[2]),
    );
    let mut out = vec![0.0f64; out_channels * of * oh * ow];
    for o in 0..out_channels {
        for t in 0..of {
            for y in 0..oh {
                for z in 0..ow {
                    let mut acc = bias[o] as f64;
                    for i in 0..c_in {
                        for a in 0..kernel[0] {
                            for b in 0..kernel[1] {
                                for c in 0..kernel[2] {
                                    let ti = (t * stride[0] + a) as i64 - pad[0] as i64;
                                    let yi = (y * stride[1] + b) as i64 - pad[1] as i64;
                                    let zi = (z * stride[2] + c) as i64 - pad[2] as i64;
                                    if ti < 0 || yi < 0 || zi < 0 || ti >= f as i64 || yi >= h as i64 || zi >= w as i64 {
                                        continue;
                                    }
                                    let wi = (((o * c_in + i) * kernel[0] + a) * kernel[1] + b) * kernel[2] + c;
                                    acc += weights[wi] as f64 * x.get(i, ti as usize, yi as usize, zi as usize) as f64;
                                }
                            }
                        }
                    }
                    out[((o * of + t) * oh + y) * ow + z] = acc;
                }
            }
        }
    }
    (vec![out_channels, of, oh, ow], out)
}

/// Batch norm applied after the fact: `(v - mean) / sqrt(var + eps) * gamma + beta`.
pub fn batchnorm_oracle(
    conv: &[f64],
    channels: usize,
    gamma: &[f32],
    beta: &[f32],
    mean: &[f32],
    var: &[f32],
    eps: f32,
) -> Vec<f64> {
    let per = conv.len() / channels;
    conv.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i / per;
            (v - mean[c] as f64) / (var[c] as f64 + eps as f64).sqrt() * gamma[c] as f64 + beta[c] as f64
        })
        .collect()
}

/// Source coordinate of output index `i` under half-pixel alignment, clamped.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    let scale = src as f64 / dst as f64;
    let x = (i as f64 + 0.5) * scale - 0.5;
    x.max(0.0).min((src - 1) as f64)
}

/// Trilinear resampling computed point by point from the eight neighbours.
pub fn resample_oracle(t: &VideoTensor, target: (usize, usize, usize)) -> Vec<f64> {
    let [c, f, h, w] = t.shape();
    let (tf, th, tw) = target;
    let mut out = Vec::with_capacity(c * tf * th * tw);
    for ch in 0..c {
        for a in 0..tf {
            for b in 0..th {
                for d in 0..tw {
                    let (x0, y0, z0) = (source_coord(a, f, tf), source_coord(b, h, th), source_coord(d, w, tw));
                    let (fa, fb, fc) = (x0.floor(), y0.floor(), z0.floor());
                    let (wa, wb, wc) = (x0 - fa, y0 - fb, z0 - fc);
                    let mut v = 0.0;
                    for (da, ka) in [(0usize, 1.0 - wa), (1, wa)] {
                        for (db, kb) in [(0usize, 1.0 - wb), (1, wb)] {
                            for (dc, kc) in [(0usize, 1.0 - wc), (1, wc)] {
                                let ia = (fa as usize + da).min(f - 1);
                                let ib = (fb as usize + db).min(h - 1);
                                let ic = (fc as usize + dc).min(w - 1);
                                v += ka * kb * kc * t.get(ch, ia, ib, ic) as f64;
                            }
                        }
                    }
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Channel vectors scaled to unit length at every location.
pub fn normalize_oracle(t: &VideoTensor, eps: f64) -> Vec<f64> {
    let [c, f, h, w] = t.shape();
    let n = f * h * w;
    let mut out = vec![0.0; c * n];
    for loc in 0..n {
        let norm = ((0..c).map(|k| (t.data()[k * n + loc] as f64).powi(2)).sum::<f64>() + eps * eps).sqrt();
        for k in 0..c {
            out[k * n + loc] = t.data()[k * n + loc] as f64 / norm;
        }
    }
    out
}

/// Normalise both, subtract, square, average over locations, per channel.
pub fn pooled_oracle(a: &VideoTensor, b: &VideoTensor, eps: f64) -> Vec<f64> {
    let (na, nb) = (normalize_oracle(a, eps), normalize_oracle(b, eps));
    let c = a.channels();
    let n = a.locations();
    (0..c)
        .map(|k| (0..n).map(|l| (na[k * n + l] - nb[k * n + l]).powi(2)).sum::<f64>() / n as f64)
        .collect()
}

pub fn plcc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Rank of each element: one plus the number of smaller elements plus half the other ties.
pub fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Kendall tau-b by enumerating every pair.
pub fn krcc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut c, mut d, mut ta, mut tb) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                ta += 1;
            }
            if db == 0.0 {
                tb += 1;
            }
            if da != 0.0 && db != 0.0 {
                if (da > 0.0) == (db > 0.0) {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (c - d) as f64 / (((n0 - ta) as f64) * ((n0 - tb) as f64)).sqrt()
}

pub fn rmse_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    (s / a.len() as f64).sqrt()
}

/// AUC by comparing every positive with every negative.
pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Best MCC by building the confusion matrix at each threshold.
pub fn mcc_oracle(scores: &[f64], labels: &[bool], steps: usize) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (s, &l) in scores.iter().zip(labels) {
            match (*s >= t, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        let den = (tp + fp) as f64 * (tp + fn_) as f64 * (tn + fp) as f64 * (tn + fn_) as f64;
        let m = if den == 0.0 {
            0.0
        } else {
            (tp as f64 * tn as f64 - fp as f64 * fn_ as f64) / den.sqrt()
        };
        if m > best.0 {
            best = (m, t);
        }
    }
    best
}

/// Synthetic calibration problem: per-patch pooled features built from a few
/// latent distortion types, ratings from known weights.
pub struct SyntheticRatings {
    pub omega_star: Vec<f64>,
    pub train: Vec<cgvqm::calibrate::RatedSample>,
    pub test: Vec<cgvqm::calibrate::RatedSample>,
}

pub fn synthetic_ratings(seed: u64, channels: usize, datasets: usize, train_per: usize, test_per: usize) -> SyntheticRatings {
    use cgvqm::calibrate::RatedSample;
    use rand_distr::{Distribution, Normal};

    let mut r = rng(seed);
    let omega_star: Vec<f64> = (0..channels).map(|_| r.gen_range(0.0..2.0)).collect();
    let types = 6;
    let basis: Vec<Vec<f64>> = (0..types)
        .map(|_| (0..channels).map(|_| if r.gen_bool(0.3) { r.gen_range(0.0..0.02) } else { 0.0 }).collect())
        .collect();
    let alpha = 100.0;
    let make = |r: &mut ChaCha8Rng, count: usize| -> Vec<(Vec<Vec<f64>>, f64)> {
        (0..count)
            .map(|_| {
                let patches: Vec<Vec<f64>> = (0..2)
                    .map(|_| {
                        let z: Vec<f64> = (0..types).map(|_| r.gen_range(0.0..1.0)).collect();
                        (0..channels)
                            .map(|c| (0..types).map(|k| z[k] * basis[k][c]).sum::<f64>() + r.gen_range(0.0..1e-4))
                            .collect()
                    })
                    .collect();
                let worst = patches
                    .iter()
                    .map(|p| p.iter().zip(&omega_star).map(|(s, w)| w * w * s).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                (patches, alpha - worst)
            })
            .collect()
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for ds in 0..datasets {
        let tr = make(&mut r, train_per);
        let te = make(&mut r, test_per);
        let all: Vec<f64> = tr.iter().chain(&te).map(|x| x.1).collect();
        let range = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - all.iter().cloned().fold(f64::INFINITY, f64::min);
        let noise = Normal::new(0.0, 0.01 * range).unwrap();
        // Each dataset reports on its own affine rating scale.
        let (gain, offset) = (1.0 + ds as f64 * 0.5, ds as f64 * 10.0);
        for (i, (patches, h)) in tr.into_iter().enumerate() {
            let h = gain * (h + noise.sample(&mut r)) + offset;
            train.push(RatedSample::from_flat(format!("d{ds}tr{i}"), format!("d{ds}"), patches, h).unwrap());
        }
        for (i, (patches, h)) in te.into_iter().enumerate() {
            let h = gain * (h + noise.sample(&mut r)) + offset;
            test.push(RatedSample::from_flat(format!("d{ds}te{i}"), format!("d{ds}"), patches, h).unwrap());
        }
    }
    SyntheticRatings { omega_star, train, test }
}
