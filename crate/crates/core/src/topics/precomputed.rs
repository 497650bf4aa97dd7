//! Precomputed context files: `user_id<TAB>step_time<TAB>delta_t<TAB>v1,...,v2K`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::context::TopicContext;
use crate::error::{Error, Result};

/// Each user's contexts in file order; the `i`-th entry belongs to the
/// user's `i`-th target event.
pub type ContextTable = BTreeMap<String, Vec<TopicContext>>;

/// One context-file line, without the newline.
pub fn format_context(c: &TopicContext) -> String {
    let values: Vec<String> = c.x.iter().map(|v| v.to_string()).collect();
    format!("{}\t{}\t{}\t{}", c.user_id, c.step_time, c.delta_t, values.join(","))
}

pub fn write_contexts<'a>(path: impl AsRef<Path>, contexts: impl IntoIterator<Item = &'a TopicContext>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for c in contexts {
        text.push_str(&format_context(c));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_contexts(text: &str) -> Result<ContextTable> {
    let mut table = ContextTable::new();
    let mut width: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let step_time: i64 = fields[1]
            .parse()
            .map_err(|e| Error::parse(line_no, format!("bad step time: {e}")))?;
        let delta_t: f64 = fields[2]
            .parse()
            .map_err(|e| Error::parse(line_no, format!("bad delta_t: {e}")))?;
        if delta_t.is_nan() || delta_t <= 0.0 {
            return Err(Error::parse(
                line_no,
                format!("delta_t must be positive, got {delta_t}"),
            ));
        }
        let x = fields[3]
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(line_no, format!("bad vector entry: {e}")))?;
        if x.is_empty() || x.len() % 2 != 0 {
            return Err(Error::parse(line_no, format!("vector length {} is not 2K", x.len())));
        }
        if let Some(w) = width {
            if w != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: w,
                    actual: x.len(),
                });
            }
        }
        width = Some(x.len());
        if let Some(bad) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::parse(
                line_no,
                format!("entries must be finite and non-negative, got {bad}"),
            ));
        }
        let ctx = TopicContext {
            user_id: fields[0].to_string(),
            step_time,
            delta_t,
            x,
        };
        let steps = table.entry(ctx.user_id.clone()).or_default();
        if let Some(last) = steps.last() {
            if last.step_time > step_time {
                return Err(Error::parse(line_no, "step times of a user must be non-decreasing"));
            }
        }
        steps.push(ctx);
    }
    Ok(table)
}

pub fn load_precomputed(path: impl AsRef<Path>) -> Result<ContextTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_contexts(&text)
}
