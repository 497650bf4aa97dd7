//! Ranking metrics and their per-user aggregation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::cosine;

/// `|list ∩ gt| / |gt|`.
pub fn hit_ratio(list: &[usize], gt: &[usize]) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::InvalidArgument("empty ground truth".into()));
    }
    let hits = gt.iter().filter(|g| list.contains(g)).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Binary-relevance NDCG normalized by the ideal ranking of
/// `min(|gt|, |list|)` relevant items.
pub fn ndcg(list: &[usize], gt: &[usize]) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::InvalidArgument("empty ground truth".into()));
    }
    let dcg: f64 = list
        .iter()
        .enumerate()
        .filter(|(_, item)| gt.contains(item))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..gt.len().min(list.len()))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    Ok(if ideal == 0.0 { 0.0 } else { dcg / ideal })
}

/// Mean pairwise `1 − cosine` of the listed items' feature vectors; pairs
/// with a zero vector count as fully dissimilar.
pub fn diversity(list: &[usize], features: &[Vec<f64>]) -> Result<f64> {
    if list.len() < 2 {
        return Err(Error::InvalidArgument("diversity needs at least two items".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..list.len() {
        for b in a + 1..list.len() {
            total += 1.0 - cosine(&features[list[a]], &features[list[b]]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Mean self-information `−log2(count / N)` of the listed items, with
/// unseen items counted once.
pub fn novelty(list: &[usize], popularity: &[u64]) -> f64 {
    if list.is_empty() {
        return 0.0;
    }
    let n: u64 = popularity.iter().sum::<u64>().max(1);
    list.iter()
        .map(|&i| -((popularity[i].max(1) as f64) / n as f64).log2())
        .sum::<f64>()
        / list.len() as f64
}

/// Fewest evaluated events a user needs to count in a streamed report.
pub const MIN_USER_EVENTS: usize = 2;

/// Metrics of one streamed prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMetrics {
    pub timestamp: i64,
    pub user: usize,
    /// Position of this event among the user's evaluated events.
    pub index: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub diversity: Option<f64>,
    pub novelty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMetrics {
    pub hr: f64,
    pub ndcg: f64,
    pub diversity: f64,
    pub novelty: f64,
    pub n_events: usize,
    pub n_users: usize,
}

/// Averages each user's events first, then across users.
pub fn user_average<'a>(events: impl IntoIterator<Item = &'a EventMetrics>) -> WindowMetrics {
    #[derive(Default)]
    struct Acc {
        n: usize,
        hr: f64,
        ndcg: f64,
        div: f64,
        div_n: usize,
        nov: f64,
    }
    let mut per_user: BTreeMap<usize, Acc> = BTreeMap::new();
    let mut n_events = 0;
    for e in events {
        let a = per_user.entry(e.user).or_default();
        a.n += 1;
        a.hr += e.hr;
        a.ndcg += e.ndcg;
        a.nov += e.novelty;
        if let Some(d) = e.diversity {
            a.div += d;
            a.div_n += 1;
        }
        n_events += 1;
    }
    let users = per_user.len();
    let mut out = WindowMetrics {
        hr: 0.0,
        ndcg: 0.0,
        diversity: 0.0,
        novelty: 0.0,
        n_events,
        n_users: users,
    };
    if users == 0 {
        return out;
    }
    let mut div_users = 0;
    for a in per_user.values() {
        let n = a.n as f64;
        out.hr += a.hr / n;
        out.ndcg += a.ndcg / n;
        out.novelty += a.nov / n;
        if a.div_n > 0 {
            out.diversity += a.div / a.div_n as f64;
            div_users += 1;
        }
    }
    out.hr /= users as f64;
    out.ndcg /= users as f64;
    out.novelty /= users as f64;
    out.diversity = if div_users > 0 {
        out.diversity / div_users as f64
    } else {
        0.0
    };
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub variant: String,
    pub seed: u64,
    pub top_k: usize,
    /// Window `w` holds each user's evaluated events with index in
    /// `[w · window_size, (w + 1) · window_size)`.
    pub window_size: usize,
    pub windows: Vec<WindowMetrics>,
    pub cumulative: WindowMetrics,
    pub events: Vec<EventMetrics>,
}

impl MetricReport {
    pub fn from_events(variant: &str, seed: u64, top_k: usize, window_size: usize, events: Vec<EventMetrics>) -> Self {
        let window_size = window_size.max(1);
        let n_windows = events.iter().map(|e| e.index / window_size + 1).max().unwrap_or(0);
        let windows = (0..n_windows)
            .map(|w| user_average(events.iter().filter(|e| e.index / window_size == w)))
            .collect();
        MetricReport {
            variant: variant.to_string(),
            seed,
            top_k,
            window_size,
            windows,
            cumulative: user_average(&events),
            events,
        }
    }

    /// Like `from_events`, but users with fewer than `MIN_USER_EVENTS`
    /// evaluated events do not take part in any average.
    pub fn from_stream(variant: &str, seed: u64, top_k: usize, window_size: usize, events: Vec<EventMetrics>) -> Self {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &events {
            *counts.entry(e.user).or_default() += 1;
        }
        let kept = events
            .into_iter()
            .filter(|e| counts[&e.user] >= MIN_USER_EVENTS)
            .collect();
        Self::from_events(variant, seed, top_k, window_size, kept)
    }

    /// Cumulative metrics over events at or after `from`.
    pub fn since(&self, from: i64) -> WindowMetrics {
        user_average(self.events.iter().filter(|e| e.timestamp >= from))
    }
}
