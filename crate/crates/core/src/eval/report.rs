//! Benchmarking metric predictions against rated videos.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::io::scores::ScoreRow;

use super::bootstrap::{bootstrap_intervals, BootstrapConfig, Statistic};
use super::fit::{apply_fit, logistic_fit, FitParams};
use super::stats::{krcc, plcc, rmse, srcc};

/// One rated distorted video.
#[derive(Clone, Debug, PartialEq)]
pub struct Rating {
    pub dataset_id: String,
    pub video_id: String,
    pub dmos: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Statistics of one metric on one dataset.
///
/// PLCC and RMSE are computed after the logistic mapping; SRCC and KRCC on
/// the fitted predictions and, separately, on the raw predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub dataset: String,
    pub n: usize,
    pub plcc: f64,
    pub srcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    pub srcc_raw: f64,
    pub krcc_raw: f64,
    pub plcc_ci: Interval,
    pub srcc_ci: Interval,
    pub krcc_ci: Interval,
    pub rmse_ci: Interval,
    pub fit: FitParams,
}

/// Point statistics and intervals for one prediction vector.
pub fn metric_report(
    metric: &str,
    dataset: &str,
    q: &[f64],
    h: &[f64],
    cfg: &BootstrapConfig,
) -> Result<MetricReport> {
    let fit = logistic_fit(q, h)?;
    let fitted = apply_fit(&fit, q);
    let plcc_v = plcc(&fitted, h)?;
    let rmse_v = rmse(&fitted, h)?;
    // A flat fit carries no ranking information.
    let (srcc_v, krcc_v) = match (srcc(&fitted, h), krcc(&fitted, h)) {
        (Ok(s), Ok(k)) => (s, k),
        _ => (0.0, 0.0),
    };
    let srcc_raw = srcc(q, h)?;
    let krcc_raw = krcc(q, h)?;

    let ci = bootstrap_intervals(q, h, &Statistic::ALL, cfg)?;
    // Percentile intervals may exclude the point estimate; widen to contain it.
    let widen = |(lo, hi): (f64, f64), point: f64| Interval {
        low: lo.min(point),
        high: hi.max(point),
    };
    Ok(MetricReport {
        metric: metric.to_string(),
        dataset: dataset.to_string(),
        n: q.len(),
        plcc: plcc_v,
        srcc: srcc_v,
        krcc: krcc_v,
        rmse: rmse_v,
        srcc_raw,
        krcc_raw,
        plcc_ci: widen(ci[0], plcc_v),
        srcc_ci: widen(ci[1], srcc_raw),
        krcc_ci: widen(ci[2], krcc_raw),
        rmse_ci: widen(ci[3], rmse_v),
        fit,
    })
}

/// Reports for every (metric, dataset) combination, in name order.
///
/// Scores are matched to ratings by `video_id`, which must therefore be
/// unique across the rated videos. Every metric must score every video.
pub fn benchmark(ratings: &[Rating], scores: &[ScoreRow], cfg: &BootstrapConfig) -> Result<Vec<MetricReport>> {
    let mut by_video: HashMap<&str, &Rating> = HashMap::new();
    for r in ratings {
        if by_video.insert(&r.video_id, r).is_some() {
            return Err(Error::invalid(format!(
                "video id `{}` appears in more than one rated pair",
                r.video_id
            )));
        }
    }
    let mut table: BTreeMap<&str, HashMap<&str, f64>> = BTreeMap::new();
    for s in scores {
        let entry = table.entry(&s.metric_name).or_default();
        if entry.insert(&s.video_id, s.score).is_some() {
            return Err(Error::invalid(format!(
                "metric `{}` scores video `{}` twice",
                s.metric_name, s.video_id
            )));
        }
    }
    if table.is_empty() {
        return Err(Error::invalid("no metric scores supplied"));
    }

    let mut datasets: BTreeMap<&str, Vec<&Rating>> = BTreeMap::new();
    for r in ratings {
        datasets.entry(&r.dataset_id).or_default().push(r);
    }

    let mut reports = Vec::new();
    for (metric, preds) in &table {
        let missing: Vec<&str> = ratings
            .iter()
            .map(|r| r.video_id.as_str())
            .filter(|v| !preds.contains_key(v))
            .collect();
        if !missing.is_empty() {
            let shown: Vec<&str> = missing.iter().take(10).copied().collect();
            return Err(Error::invalid(format!(
                "metric `{metric}` has no score for {} video(s): {}{}",
                missing.len(),
                shown.join(", "),
                if missing.len() > shown.len() { ", ..." } else { "" }
            )));
        }
        for (dataset, rows) in &datasets {
            let q: Vec<f64> = rows.iter().map(|r| preds[r.video_id.as_str()]).collect();
            let h: Vec<f64> = rows.iter().map(|r| r.dmos).collect();
            reports.push(metric_report(metric, dataset, &q, &h, cfg)?);
        }
    }
    Ok(reports)
}

/// Aligned plain-text table of reports.
pub fn format_reports(reports: &[MetricReport]) -> String {
    let header = [
        "metric", "dataset", "n", "PLCC", "SRCC", "KRCC", "RMSE", "SRCC(raw)", "KRCC(raw)", "PLCC 95% CI",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.metric.clone(),
                r.dataset.clone(),
                r.n.to_string(),
                format!("{:.4}", r.plcc),
                format!("{:.4}", r.srcc),
                format!("{:.4}", r.krcc),
                format!("{:.4}", r.rmse),
                format!("{:.4}", r.srcc_raw),
                format!("{:.4}", r.krcc_raw),
                format!("[{:.4}, {:.4}]", r.plcc_ci.low, r.plcc_ci.high),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    for r in &rows {
        line(r);
    }
    out
}
