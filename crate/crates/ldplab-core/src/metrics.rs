//! Run quality metrics: release accuracy, communication cost, and
//! event-detection power.
//!
//! Accuracy is mean relative error against the true histograms with a
//! floor of [`MRE_GAMMA`] on the denominator so empty cells cannot blow
//! the ratio up. Communication is uploads per user per step. Detection
//! power scores the released series as a detector of threshold crossings
//! defined on the TRUE monitored series, summarized as ROC points and the
//! area under them.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::Error;
use crate::freq::Histogram;

/// Denominator floor in the relative error: cells with true frequency
/// below this contribute `|release - truth| / MRE_GAMMA`.
pub const MRE_GAMMA: f64 = 0.001;

/// True monitored series with spread below this are reported as
/// [`Error::DegenerateSeries`]: no threshold can separate events from
/// non-events on a flat line.
pub const SERIES_SPREAD_FLOOR: f64 = 1e-12;

/// Mean relative error over all steps and cells:
/// `(1/(T d)) sum_t sum_k |r_t[k] - c_t[k]| / max(c_t[k], MRE_GAMMA)`.
pub fn mre(releases: &[Histogram], truths: &[Histogram]) -> Result<f64, Error> {
    if releases.len() != truths.len() {
        return Err(Error::LengthMismatch { expected: truths.len(), got: releases.len() });
    }
    if releases.is_empty() {
        return Err(Error::InvalidParams("need at least one step".to_string()));
    }
    let d = truths[0].d();
    let mut total = 0.0;
    for (r, c) in releases.iter().zip(truths.iter()) {
        if r.d() != d || c.d() != d {
            return Err(Error::LengthMismatch { expected: d, got: r.d().min(c.d()) });
        }
        for (rv, cv) in r.0.iter().zip(c.0.iter()) {
            let denom = cv.max(MRE_GAMMA);
            let gap = rv - cv;
            total += if gap < 0.0 { -gap } else { gap } / denom;
        }
    }
    Ok(total / (releases.len() as f64 * d as f64))
}

/// Communication frequency per user: total uploads over `n * T`.
pub fn cfpu(comm_events: &[u64], n: u64) -> Result<f64, Error> {
    if comm_events.is_empty() || n == 0 {
        return Err(Error::InvalidParams("need at least one step and one user".to_string()));
    }
    let total: u64 = comm_events.iter().sum();
    Ok(total as f64 / (n as f64 * comm_events.len() as f64))
}

/// Per-step statistic the event detector watches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monitor {
    /// Largest cell frequency.
    Max,
    /// Frequency-weighted mean of the cell indices, reading the domain as
    /// ordinal 0..d; for a binary domain this is the frequency of value 1.
    /// The plain cell average would be pinned at `1/d` and useless.
    Mean,
}

impl Monitor {
    pub fn apply(self, h: &Histogram) -> f64 {
        match self {
            Monitor::Max => h.0.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Monitor::Mean => h.0.iter().enumerate().map(|(k, &v)| k as f64 * v).sum(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Monitor::Max => "max",
            Monitor::Mean => "mean",
        }
    }
}

impl core::str::FromStr for Monitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Monitor::Max),
            "mean" => Ok(Monitor::Mean),
            other => Err(Error::InvalidConfig(alloc::format!("unknown monitor '{other}'"))),
        }
    }
}

/// One ROC operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Labels steps as events by thresholding the series at
/// `delta_fraction * (max - min) + min`, strictly above. The fraction must
/// lie strictly inside `(0, 1)`, which guarantees both classes occur; a
/// series flatter than [`SERIES_SPREAD_FLOOR`] is degenerate.
pub fn event_labels(series: &[f64], delta_fraction: f64) -> Result<Vec<bool>, Error> {
    if !(delta_fraction > 0.0 && delta_fraction < 1.0) {
        return Err(Error::InvalidParams(
            "threshold fraction must lie strictly between 0 and 1".to_string(),
        ));
    }
    if series.is_empty() {
        return Err(Error::InvalidParams("need at least one step".to_string()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in series {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if hi - lo < SERIES_SPREAD_FLOOR {
        return Err(Error::DegenerateSeries);
    }
    let delta = delta_fraction * (hi - lo) + lo;
    Ok(series.iter().map(|&s| s > delta).collect())
}

/// ROC of the released monitored series as a detector of events on the
/// true monitored series.
///
/// Points are swept over score thresholds from high to low; the first point
/// is (0,0), the last (1,1), and ties in score move diagonally in one step.
pub fn event_roc(
    releases: &[Histogram],
    truths: &[Histogram],
    monitor: Monitor,
    delta_fraction: f64,
) -> Result<Vec<RocPoint>, Error> {
    if releases.len() != truths.len() {
        return Err(Error::LengthMismatch { expected: truths.len(), got: releases.len() });
    }
    let true_series: Vec<f64> = truths.iter().map(|h| monitor.apply(h)).collect();
    let labels = event_labels(&true_series, delta_fraction)?;
    let scores: Vec<f64> = releases.iter().map(|h| monitor.apply(h)).collect();

    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let negatives = labels.len() as f64 - positives;
    // Both counts are nonzero: the threshold sits strictly between the
    // series extremes.
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut prev_score = f64::INFINITY;
    for &i in &order {
        if scores[i] != prev_score {
            points.push(RocPoint { fpr: fp as f64 / negatives, tpr: tp as f64 / positives });
            prev_score = scores[i];
        }
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    points.push(RocPoint { fpr: 1.0, tpr: 1.0 });
    Ok(points)
}

/// Trapezoidal area under a fpr-sorted ROC sweep.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|p| (p[1].fpr - p[0].fpr) * (p[1].tpr + p[0].tpr) / 2.0)
        .sum()
}
