//! CSV serialization of metric reports, plus merging and seed summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::metrics::{EventMetrics, MetricReport, WindowMetrics};
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "variant,window,hr,ndcg,diversity,novelty,n_events";
pub const LONG_HEADER: &str = "variant,seed,interactions,metric,value";
pub const SUMMARY_HEADER: &str = "variant,window,metric,mean,std,runs";

/// Window label of the cumulative row.
pub const CUMULATIVE: &str = "all";

fn row(out: &mut String, variant: &str, window: &str, m: &WindowMetrics) {
    writeln!(
        out,
        "{variant},{window},{},{},{},{},{}",
        m.hr, m.ndcg, m.diversity, m.novelty, m.n_events
    )
    .expect("write to string");
}

/// One row per window plus a final cumulative row.
pub fn report_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        for (w, m) in r.windows.iter().enumerate() {
            row(&mut out, &r.variant, &w.to_string(), m);
        }
        row(&mut out, &r.variant, CUMULATIVE, &r.cumulative);
    }
    out
}

/// Cumulative user-averaged metrics after every `every` stream events, in
/// stream order, one line per metric.
pub fn long_csv(reports: &[MetricReport], every: usize) -> String {
    let every = every.max(1);
    let mut out = format!("{LONG_HEADER}\n");
    for r in reports {
        let mut order: Vec<&EventMetrics> = r.events.iter().collect();
        order.sort_by_key(|e| (e.timestamp, e.user, e.index));
        // per-user sums of hr, ndcg, novelty and event count
        let mut users: BTreeMap<usize, [f64; 4]> = BTreeMap::new();
        for (n, e) in order.iter().enumerate() {
            let acc = users.entry(e.user).or_default();
            acc[0] += e.hr;
            acc[1] += e.ndcg;
            acc[2] += e.novelty;
            acc[3] += 1.0;
            let seen = n + 1;
            if seen % every != 0 && seen != order.len() {
                continue;
            }
            let mut mean = [0.0; 3];
            for a in users.values() {
                for (m, s) in mean.iter_mut().zip(a) {
                    *m += s / a[3];
                }
            }
            let u = users.len() as f64;
            for (name, v) in ["hr", "ndcg", "novelty"].iter().zip(mean) {
                writeln!(out, "{},{},{seen},{name},{}", r.variant, r.seed, v / u).expect("write to string");
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: String,
    pub window: String,
    pub values: [f64; 4],
    pub n_events: usize,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == REPORT_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header `{REPORT_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::parse(i + 1, format!("expected 7 fields, found {}", f.len())));
        }
        let mut values = [0.0; 4];
        for (v, s) in values.iter_mut().zip(&f[2..6]) {
            *v = s
                .parse()
                .map_err(|e| Error::parse(i + 1, format!("bad value `{s}`: {e}")))?;
        }
        out.push(ReportRow {
            variant: f[0].to_string(),
            window: f[1].to_string(),
            values,
            n_events: f[6]
                .parse()
                .map_err(|e| Error::parse(i + 1, format!("bad count `{}`: {e}", f[6])))?,
        });
    }
    Ok(out)
}

/// Concatenates report files under one header.
pub fn merge_reports(texts: &[String]) -> Result<String> {
    let mut out = format!("{REPORT_HEADER}\n");
    for t in texts {
        for r in parse_report_csv(t)? {
            let [hr, ndcg, div, nov] = r.values;
            writeln!(out, "{},{},{hr},{ndcg},{div},{nov},{}", r.variant, r.window, r.n_events)
                .expect("write to string");
        }
    }
    Ok(out)
}

/// Mean and sample standard deviation of every metric per
/// `(variant, window)` across runs.
pub fn summarize(rows: &[ReportRow]) -> String {
    let mut groups: BTreeMap<(&str, &str), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((&r.variant, &r.window)).or_default().push(r);
    }
    let mut keys: Vec<_> = groups.keys().copied().collect();
    // numeric windows in order, the cumulative row last
    keys.sort_by_key(|(v, w)| (v.to_string(), w.parse::<usize>().unwrap_or(usize::MAX), w.to_string()));
    let mut out = format!("{SUMMARY_HEADER}\n");
    for key in keys {
        let group = &groups[&key];
        let n = group.len() as f64;
        for (i, name) in ["hr", "ndcg", "diversity", "novelty"].iter().enumerate() {
            let mean = group.iter().map(|r| r.values[i]).sum::<f64>() / n;
            let var = if group.len() > 1 {
                group.iter().map(|r| (r.values[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            writeln!(out, "{},{},{name},{mean},{},{}", key.0, key.1, var.sqrt(), group.len()).expect("write to string");
        }
    }
    out
}
