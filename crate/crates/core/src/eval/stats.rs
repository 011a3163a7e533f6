use std::cmp::Ordering;

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64], min_len: usize, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{what} inputs have lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < min_len {
        return Err(Error::degenerate(format!("{what} needs at least {min_len} points")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} inputs must be finite")));
    }
    Ok(())
}

/// Pearson linear correlation.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2, "PLCC")?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::degenerate("PLCC of a constant vector"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of their ranks.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j share their mean.
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: PLCC of fractional ranks.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2, "SRCC")?;
    plcc(&fractional_ranks(a), &fractional_ranks(b))
}

/// Number of tied pairs among runs of equal values in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for x in sorted {
        if prev.as_ref() == Some(&x) {
            run += 1;
        } else {
            total += run * (run.saturating_sub(1)) / 2;
            run = 1;
        }
        prev = Some(x);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Sorts `v` in place and returns the number of inversions (strict).
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall tau-b with tie corrections, in `O(n log n)`.
pub fn krcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2, "KRCC")?;
    let n = a.len() as u64;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let n0 = n * (n - 1) / 2;
    let n1 = tied_pairs(pairs.iter().map(|p| p.0));
    let n3 = tied_pairs(pairs.iter().copied());
    let mut bs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(bs.len());
    let swaps = merge_count(&mut bs, &mut buf);
    let n2 = tied_pairs(bs.iter().copied());

    if n0 == n1 || n0 == n2 {
        return Err(Error::degenerate("KRCC with every pair tied in one input"));
    }
    // Concordant minus discordant over pairs untied in both inputs.
    let untied = n0 + n3 - n1 - n2;
    let diff = untied as i64 - 2 * swaps as i64;
    Ok(diff as f64 / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt())
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 1, "RMSE")?;
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sse / a.len() as f64).sqrt())
}

/// Linear interpolation quantile of sorted data, `p` in `[0, 1]`.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    quantile_sorted(&s, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(fractional_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(fractional_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn srcc_cases() {
        let a = [0.3, 1.2, 2.0, 7.5, 9.0];
        let exp: Vec<f64> = a.iter().map(|x: &f64| x.exp()).collect();
        assert!((srcc(&a, &exp).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        assert!((srcc(&a, &rev).unwrap() + 1.0).abs() < 1e-15);
        // Ranks (1, 2.5, 2.5, 4) against (1, 3, 2, 4).
        let want = plcc(&[1.0, 2.5, 2.5, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((srcc(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - want).abs() < 1e-12);
        assert!(srcc(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn krcc_cases() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(krcc(&a, &a).unwrap(), 1.0);
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        assert_eq!(krcc(&a, &rev).unwrap(), -1.0);
        // One discordant pair out of six.
        assert!((krcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert!(krcc(&[2.0; 4], &a[..4]).is_err());
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }
}
