//! Baseline that recommends the previous UTC day's most popular items.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::eval::metrics::{hit_ratio, ndcg, EventMetrics};
use crate::pipeline::{PreparedData, Segment, UserSequence};

pub const SECONDS_PER_DAY: i64 = 86_400;

pub fn utc_day(timestamp: i64) -> i64 {
    timestamp.div_euclid(SECONDS_PER_DAY)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimePop {
    num_items: usize,
    daily: BTreeMap<i64, Vec<u64>>,
    all_time: Vec<u64>,
}

impl TimePop {
    pub fn new(num_items: usize) -> Self {
        TimePop {
            num_items,
            daily: BTreeMap::new(),
            all_time: vec![0; num_items],
        }
    }

    pub fn observe(&mut self, timestamp: i64, item: usize) {
        self.daily
            .entry(utc_day(timestamp))
            .or_insert_with(|| vec![0; self.num_items])[item] += 1;
        self.all_time[item] += 1;
    }

    /// Top `k` items of the day before `timestamp`'s day, padded with the
    /// all-time ranking. Ties go to the lower item index.
    pub fn recommend(&self, timestamp: i64, k: usize) -> Vec<usize> {
        let k = k.min(self.num_items);
        let mut out: Vec<usize> = Vec::with_capacity(k);
        if let Some(counts) = self.daily.get(&(utc_day(timestamp) - 1)) {
            out.extend(ranked(counts).into_iter().filter(|&i| counts[i] > 0).take(k));
        }
        for i in ranked(&self.all_time) {
            if out.len() == k {
                break;
            }
            if !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }
}

/// Held-out part replayed against the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeldOut {
    /// Validation steps, after observing training steps.
    Validation,
    /// Test steps, after observing training and validation steps.
    Test,
}

/// Predict-then-observe replay of a held-out part in global time order.
pub fn timepop_events(data: &PreparedData, part: HeldOut, k: usize) -> Result<Vec<EventMetrics>> {
    let mut tp = TimePop::new(data.num_items());
    let history = |s: &UserSequence| -> Vec<Segment> {
        match part {
            HeldOut::Validation => vec![s.train.clone()],
            HeldOut::Test => vec![s.train.clone(), s.validation.clone()],
        }
    };
    let mut seen: Vec<(i64, usize)> = Vec::new();
    let mut stream: Vec<(i64, usize, usize, usize)> = Vec::new();
    for s in &data.sequences {
        for seg in history(s) {
            for (step, &t) in seg.steps.iter().zip(&seg.times) {
                seen.push((t, step.target.expect("target")));
            }
        }
        let held = match part {
            HeldOut::Validation => &s.validation,
            HeldOut::Test => &s.test,
        };
        for (i, (step, &t)) in held.steps.iter().zip(&held.times).enumerate() {
            stream.push((t, s.user, i, step.target.expect("target")));
        }
    }
    seen.sort_unstable();
    for (t, item) in seen {
        tp.observe(t, item);
    }
    stream.sort_unstable();
    let mut out = Vec::with_capacity(stream.len());
    for (t, user, index, item) in stream {
        let list = tp.recommend(t, k);
        out.push(EventMetrics {
            timestamp: t,
            user,
            index,
            hr: hit_ratio(&list, &[item])?,
            ndcg: ndcg(&list, &[item])?,
            diversity: None,
            novelty: 0.0,
        });
        tp.observe(t, item);
    }
    Ok(out)
}

fn ranked(counts: &[u64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..counts.len()).collect();
    idx.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    idx
}
