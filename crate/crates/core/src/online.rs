//! Streaming predict-then-update loop over held-out events.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use log::{debug, warn};

use crate::cell::{rank_of, top_k, UserRecurrentState};
use crate::data::{parse_event_str, DatasetSplit, IdIndex, InteractionEvent, StreamRange};
use crate::error::{Error, Result};
use crate::eval::{diversity, hit_ratio, ndcg, novelty, EventMetrics};
use crate::model::{
    forward_sequence, forward_step, path_ranges, step_gradient, Dropout, ModelOptions, StepInput, TapeStep,
};
use crate::params::ParameterSet;
use crate::pipeline::ContextSource;
use crate::store::Container;
use crate::topics::{format_context, parse_contexts, window_aggregate, TopicModel};
use crate::train::loss::loss;
use crate::train::{AdamState, Checkpoint};

pub const EVENT_CSV_HEADER: &str = "timestamp,user_id,hit,rank_of_observed,hr_at_k,ndcg_at_k";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdatePolicy {
    /// Optimizer iterations per observed event; 0 disables updates.
    pub max_iters: usize,
    pub top_k: usize,
    pub clip: Option<f64>,
    /// Reject an iteration that lowers the observed item's probability.
    pub monotone_guard: bool,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        UpdatePolicy {
            max_iters: 2,
            top_k: 100,
            clip: Some(5.0),
            monotone_guard: true,
        }
    }
}

impl UpdatePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be positive".into()));
        }
        if self.max_iters > 16 {
            return Err(Error::InvalidArgument(format!(
                "max_iters {} is not a small bound",
                self.max_iters
            )));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidArgument(format!("clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Observed item's probability before the update and after each
    /// accepted iteration.
    pub observed: Vec<f64>,
    pub rejected: usize,
    /// The whole update was rolled back after a non-finite loss.
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub timestamp: i64,
    pub user: usize,
    pub user_id: String,
    pub item: usize,
    /// Top-K list computed before the item was revealed.
    pub list: Vec<usize>,
    /// 1-based rank of the observed item among all items.
    pub rank: usize,
    pub scores: Vec<f64>,
    pub alpha: Vec<f64>,
    pub metrics: EventMetrics,
    pub update: UpdateReport,
}

impl Prediction {
    pub fn hit(&self) -> bool {
        self.metrics.hr > 0.0
    }

    pub fn csv_row(&self) -> String {
        let rank = if self.hit() { self.rank as i64 } else { -1 };
        format!(
            "{},{},{},{},{},{}",
            self.timestamp,
            self.user_id,
            u8::from(self.hit()),
            rank,
            self.metrics.hr,
            self.metrics.ndcg
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Buffered,
    Skipped(String),
    Predicted(Box<Prediction>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSession {
    pub params: ParameterSet,
    pub optimizer: AdamState,
    pub options: ModelOptions,
    pub policy: UpdatePolicy,
    pub users: IdIndex,
    pub catalog: IdIndex,
    pub context: ContextSource,
    pub states: Vec<UserRecurrentState>,
    /// Source events since each user's last target event.
    pub buffers: Vec<Vec<InteractionEvent>>,
    pub last_target: Vec<Option<i64>>,
    /// Target steps seen per user, including pre-stream ones.
    pub steps_seen: Vec<usize>,
    /// Evaluated events per user.
    pub stream_seen: Vec<usize>,
    pub clock: Option<i64>,
    pub item_features: Vec<Vec<f64>>,
    pub popularity: Vec<u64>,
    pub config: Vec<(String, String)>,
}

struct Saved {
    ranges: Vec<Range<usize>>,
    params: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OnlineSession {
    pub fn new(
        checkpoint: Checkpoint,
        context: ContextSource,
        policy: UpdatePolicy,
        item_features: Vec<Vec<f64>>,
        popularity: Vec<u64>,
    ) -> Result<Self> {
        policy.validate()?;
        let shape = *checkpoint.params.shape();
        if policy.top_k > shape.num_items {
            return Err(Error::InvalidArgument(format!(
                "top_k {} exceeds the {} catalog items",
                policy.top_k, shape.num_items
            )));
        }
        if context.num_topics()? != shape.num_topics {
            return Err(Error::DimensionMismatch {
                expected: shape.num_topics,
                actual: context.num_topics()?,
            });
        }
        if item_features.len() != shape.num_items || popularity.len() != shape.num_items {
            return Err(Error::DimensionMismatch {
                expected: shape.num_items,
                actual: item_features.len().min(popularity.len()),
            });
        }
        let n = shape.num_users;
        Ok(OnlineSession {
            options: checkpoint.options(),
            params: checkpoint.params,
            optimizer: checkpoint.optimizer,
            policy,
            users: checkpoint.users,
            catalog: checkpoint.catalog,
            context,
            states: vec![UserRecurrentState::new(shape.hidden); n],
            buffers: vec![Vec::new(); n],
            last_target: vec![None; n],
            steps_seen: vec![0; n],
            stream_seen: vec![0; n],
            clock: None,
            item_features,
            popularity,
            config: checkpoint.config,
        })
    }

    /// Model part of the session as a checkpoint.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            variant: self.options.variant,
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            tau: self.options.cell.tau,
            history_cap: self.options.cell.history_cap,
            users: self.users.clone(),
            catalog: self.catalog.clone(),
            config: self.config.clone(),
        }
    }

    /// Replays every user's events that precede `range` in evaluation mode,
    /// leaving states and buffers ready for the stream. The clock is left
    /// alone: splits are per user, so one user's held-out events may predate
    /// another user's training events.
    pub fn warm_start(&mut self, split: &DatasetSplit, range: StreamRange) -> Result<()> {
        for user_id in split.users() {
            let Some(u) = self.users.index_of(user_id) else {
                warn!("warm start: user {user_id} is not in the checkpoint, skipped");
                continue;
            };
            let mut events: Vec<&InteractionEvent> = split.train.get(user_id).into_iter().flatten().collect();
            if range == StreamRange::Test {
                events.extend(split.validation.get(user_id).into_iter().flatten());
            }
            let contexts = self.context.contexts(user_id, &events)?;
            let targets: Vec<&InteractionEvent> = events.iter().copied().filter(|e| e.item().is_some()).collect();
            let mut steps = Vec::with_capacity(targets.len());
            for (ctx, e) in contexts.into_iter().zip(&targets) {
                let item = e.item().expect("target event");
                let target = self
                    .catalog
                    .index_of(item)
                    .ok_or_else(|| Error::UnknownItem(item.to_string()))?;
                steps.push(StepInput {
                    x: ctx.x,
                    delta_t: ctx.delta_t,
                    target: Some(target),
                });
            }
            let state = UserRecurrentState::new(self.params.shape().hidden);
            let tape = forward_sequence(&self.params, &self.options, u, &steps, state, Dropout::Off)?;
            self.states[u] = tape.final_state;
            self.steps_seen[u] = steps.len();
            self.last_target[u] = targets.last().map(|e| e.timestamp);
            let cut = self.last_target[u].unwrap_or(i64::MIN);
            self.buffers[u] = events
                .iter()
                .filter(|e| e.network.is_source() && e.timestamp > cut)
                .map(|e| (*e).clone())
                .collect();
        }
        Ok(())
    }

    pub fn process_event(&mut self, event: &InteractionEvent) -> Result<Outcome> {
        if let Some(clock) = self.clock {
            if event.timestamp < clock {
                return Err(Error::OutOfOrder {
                    timestamp: event.timestamp,
                    clock,
                });
            }
        }
        self.clock = Some(event.timestamp);
        let Some(u) = self.users.index_of(&event.user_id) else {
            let why = format!("unknown user `{}`", event.user_id);
            warn!("skipping event at {}: {why}", event.timestamp);
            return Ok(Outcome::Skipped(why));
        };
        let Some(item_id) = event.item() else {
            self.buffers[u].push(event.clone());
            return Ok(Outcome::Buffered);
        };
        let Some(item) = self.catalog.index_of(item_id) else {
            let why = format!("unknown item `{item_id}`");
            warn!("skipping event at {}: {why}", event.timestamp);
            return Ok(Outcome::Skipped(why));
        };

        let (x, delta_t) = self.context_for(u, event.timestamp)?;
        let step = StepInput {
            x,
            delta_t,
            target: Some(item),
        };
        let rec = forward_step(&self.params, &self.options, u, &self.states[u], &step, None)?;
        let list = top_k(&rec.y_hat, self.policy.top_k)?;
        let gt = [item];
        let metrics = EventMetrics {
            timestamp: event.timestamp,
            user: u,
            index: self.stream_seen[u],
            hr: hit_ratio(&list, &gt)?,
            ndcg: ndcg(&list, &gt)?,
            diversity: if list.len() >= 2 {
                Some(diversity(&list, &self.item_features)?)
            } else {
                None
            },
            novelty: novelty(&list, &self.popularity),
        };
        let rank = rank_of(&rec.y_hat, item);
        let scores = rec.y_hat.clone();
        let alpha = rec.trace.alpha.clone();

        let (update, last) = self.incremental_update(u, &step, rec)?;
        let opts = self.options.cell;
        self.states[u].commit(&step.x, &last.trace, &opts);
        self.buffers[u].clear();
        self.last_target[u] = Some(event.timestamp);
        self.steps_seen[u] += 1;
        self.stream_seen[u] += 1;

        Ok(Outcome::Predicted(Box::new(Prediction {
            timestamp: event.timestamp,
            user: u,
            user_id: event.user_id.clone(),
            item,
            list,
            rank,
            scores,
            alpha,
            metrics,
            update,
        })))
    }

    fn context_for(&self, u: usize, timestamp: i64) -> Result<(Vec<f64>, f64)> {
        match &self.context {
            ContextSource::Model(m) => {
                let ctx = window_aggregate(self.users.id(u), timestamp, self.last_target[u], &self.buffers[u], m);
                Ok((ctx.x, ctx.delta_t))
            }
            ContextSource::Table(t) => {
                let user_id = self.users.id(u);
                let row = t
                    .get(user_id)
                    .and_then(|rows| rows.get(self.steps_seen[u]))
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "context table has no row {} for user {user_id}",
                            self.steps_seen[u]
                        ))
                    })?;
                if row.step_time != timestamp {
                    return Err(Error::InvalidArgument(format!(
                        "context for user {user_id} at {} does not match target event at {timestamp}",
                        row.step_time
                    )));
                }
                Ok((row.x.clone(), row.delta_t))
            }
        }
    }

    fn save_ranges(&self, ranges: &[Range<usize>]) -> Saved {
        let gather = |v: &[f64]| ranges.iter().flat_map(|r| v[r.clone()].iter().copied()).collect();
        Saved {
            ranges: ranges.to_vec(),
            params: gather(self.params.flatten()),
            m: gather(&self.optimizer.m),
            v: gather(&self.optimizer.v),
            step: self.optimizer.step,
        }
    }

    fn restore_ranges(&mut self, s: &Saved) {
        let mut off = 0;
        for r in &s.ranges {
            let n = r.len();
            self.params.flatten_mut()[r.clone()].copy_from_slice(&s.params[off..off + n]);
            self.optimizer.m[r.clone()].copy_from_slice(&s.m[off..off + n]);
            self.optimizer.v[r.clone()].copy_from_slice(&s.v[off..off + n]);
            off += n;
        }
        self.optimizer.step = s.step;
    }

    /// Up to `max_iters` Adam steps on the loss of the current step alone,
    /// touching only parameters on its forward path. Returns the report and
    /// the forward record under the final parameters.
    pub fn incremental_update(
        &mut self,
        user: usize,
        step: &StepInput,
        first: TapeStep,
    ) -> Result<(UpdateReport, TapeStep)> {
        let item = step
            .target
            .ok_or_else(|| Error::InvalidArgument("update needs an observed item".into()))?;
        let mut report = UpdateReport {
            observed: vec![first.y_hat[item]],
            rejected: 0,
            aborted: false,
        };
        if self.policy.max_iters == 0 {
            return Ok((report, first));
        }
        let ranges = path_ranges(&self.params, &self.options, user, &first);
        let origin = self.save_ranges(&ranges);
        let mut cur = first;
        for iter in 0..self.policy.max_iters {
            let l = loss(&cur.y_hat, item);
            let mut grad = step_gradient(&self.params, &self.options, user, &cur);
            if !l.is_finite() || !grad.all_finite() {
                warn!("non-finite loss {l} for user {user}, update rolled back");
                self.restore_ranges(&origin);
                report.aborted = true;
                report.observed.truncate(1);
                let rec = forward_step(&self.params, &self.options, user, &self.states[user], step, None)?;
                return Ok((report, rec));
            }
            if let Some(c) = self.policy.clip {
                grad.clip_global_norm(c);
            }
            let before = self.save_ranges(&ranges);
            self.optimizer.step_ranges(&mut self.params, &grad, &ranges)?;
            let next = forward_step(&self.params, &self.options, user, &self.states[user], step, None)?;
            let p = next.y_hat[item];
            if !p.is_finite() || (self.policy.monotone_guard && p < cur.y_hat[item]) {
                debug!("iteration {iter} for user {user} lowered p(observed) to {p}, rejected");
                self.restore_ranges(&before);
                report.rejected += 1;
                break;
            }
            report.observed.push(p);
            cur = next;
        }
        Ok((report, cur))
    }

    /// Feeds every event in order, returning the predictions.
    pub fn run(&mut self, events: impl IntoIterator<Item = InteractionEvent>) -> Result<Vec<Prediction>> {
        let mut out = Vec::new();
        for e in events {
            if let Outcome::Predicted(p) = self.process_event(&e)? {
                out.push(*p);
            }
        }
        Ok(out)
    }

    pub fn to_container(&self) -> Container {
        let mut c = self.checkpoint().to_container();
        c.meta.retain(|(k, _)| k != "kind");
        c.meta.insert(0, ("kind".into(), "snapshot".into()));
        let p = &self.policy;
        c.put_meta("policy.max_iters", p.max_iters);
        c.put_meta("policy.top_k", p.top_k);
        c.put_meta("policy.clip", p.clip.map_or("none".into(), |v| v.to_string()));
        c.put_meta("policy.monotone_guard", p.monotone_guard);
        c.put_meta("clock", self.clock.map_or("none".into(), |v| v.to_string()));

        let hidden = self.params.shape().hidden;
        let n = self.users.len();
        let flat = |f: &dyn Fn(&UserRecurrentState) -> &Vec<f64>| -> Vec<f64> {
            self.states.iter().flat_map(|s| f(s).iter().copied()).collect()
        };
        c.put_tensor("state.c", n, hidden, flat(&|s| &s.c));
        c.put_tensor("state.h", n, hidden, flat(&|s| &s.h));
        let mut hist_len = Vec::with_capacity(n);
        for (u, s) in self.states.iter().enumerate() {
            hist_len.push(s.history.len().to_string());
            if s.history.is_empty() {
                continue;
            }
            let width = s.history[0].0.len();
            let xs = s.history.iter().flat_map(|(x, _)| x.iter().copied()).collect();
            let hs = s.history.iter().flat_map(|(_, h)| h.iter().copied()).collect();
            c.put_tensor(&format!("hist_x.{u}"), s.history.len(), width, xs);
            c.put_tensor(&format!("hist_h.{u}"), s.history.len(), hidden, hs);
        }
        c.put_list("hist_len", hist_len);
        c.put_list(
            "last_target",
            self.last_target
                .iter()
                .map(|t| t.map_or("none".into(), |v| v.to_string()))
                .collect(),
        );
        c.put_list("steps_seen", self.steps_seen.iter().map(usize::to_string).collect());
        c.put_list("stream_seen", self.stream_seen.iter().map(usize::to_string).collect());
        c.put_list(
            "buffer",
            self.buffers.iter().flatten().map(InteractionEvent::to_line).collect(),
        );

        match &self.context {
            ContextSource::Model(m) => {
                c.put_meta("context", "model");
                let tm = m.to_container();
                for (k, v) in tm.meta {
                    c.meta.push((format!("topic.{k}"), v));
                }
                for (k, v) in tm.lists {
                    c.lists.push((format!("topic.{k}"), v));
                }
                for mut t in tm.tensors {
                    t.name = format!("topic.{}", t.name);
                    c.tensors.push(t);
                }
            }
            ContextSource::Table(t) => {
                c.put_meta("context", "table");
                c.put_list("contexts", t.values().flatten().map(format_context).collect());
            }
        }
        let width = self.item_features.first().map_or(0, Vec::len);
        c.put_tensor(
            "item_features",
            self.item_features.len(),
            width,
            self.item_features.iter().flatten().copied().collect(),
        );
        c.put_list("popularity", self.popularity.iter().map(u64::to_string).collect());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.meta("kind")? != "snapshot" {
            return Err(Error::Checkpoint("not a session snapshot".into()));
        }
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let checkpoint = Checkpoint::from_container(c)?;
        let none_or = |v: &str| -> Result<Option<String>> { Ok((v != "none").then(|| v.to_string())) };
        let policy = UpdatePolicy {
            max_iters: c.meta_parse("policy.max_iters")?,
            top_k: c.meta_parse("policy.top_k")?,
            clip: none_or(c.meta("policy.clip")?)?
                .map(|v| v.parse().map_err(|_| bad("malformed policy.clip")))
                .transpose()?,
            monotone_guard: c.meta_parse("policy.monotone_guard")?,
        };
        let context = match c.meta("context")? {
            "model" => {
                let mut tm = Container::default();
                for (k, v) in &c.meta {
                    if let Some(k) = k.strip_prefix("topic.") {
                        tm.meta.push((k.to_string(), v.clone()));
                    }
                }
                for (k, v) in &c.lists {
                    if let Some(k) = k.strip_prefix("topic.") {
                        tm.lists.push((k.to_string(), v.clone()));
                    }
                }
                for t in &c.tensors {
                    if let Some(k) = t.name.strip_prefix("topic.") {
                        let mut t = t.clone();
                        t.name = k.to_string();
                        tm.tensors.push(t);
                    }
                }
                ContextSource::Model(TopicModel::from_container(&tm)?)
            }
            "table" => ContextSource::Table(parse_contexts(&c.list("contexts")?.join("\n"))?),
            other => return Err(bad(&format!("unknown context kind `{other}`"))),
        };
        let feats = c.tensor("item_features")?;
        let item_features: Vec<Vec<f64>> = if feats.cols == 0 {
            vec![Vec::new(); feats.rows]
        } else {
            feats.data.chunks(feats.cols).map(<[f64]>::to_vec).collect()
        };
        let popularity = parse_list(c.list("popularity")?)?;
        let mut s = OnlineSession::new(checkpoint, context, policy, item_features, popularity)?;

        let n = s.users.len();
        let hidden = s.params.shape().hidden;
        let sc = c.tensor("state.c")?;
        let sh = c.tensor("state.h")?;
        if (sc.rows, sc.cols) != (n, hidden) || (sh.rows, sh.cols) != (n, hidden) {
            return Err(bad("user state tensors disagree with the model shape"));
        }
        let hist_len: Vec<usize> = parse_list(c.list("hist_len")?)?;
        let last_target = c
            .list("last_target")?
            .iter()
            .map(|v| {
                none_or(v)?
                    .map(|v| v.parse().map_err(|_| bad("malformed last_target")))
                    .transpose()
            })
            .collect::<Result<Vec<Option<i64>>>>()?;
        s.steps_seen = parse_list(c.list("steps_seen")?)?;
        s.stream_seen = parse_list(c.list("stream_seen")?)?;
        if [
            hist_len.len(),
            last_target.len(),
            s.steps_seen.len(),
            s.stream_seen.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(bad("per-user lists disagree with the user count"));
        }
        s.last_target = last_target;
        for (u, (st, &len)) in s.states.iter_mut().zip(&hist_len).enumerate() {
            st.c.copy_from_slice(&sc.data[u * hidden..(u + 1) * hidden]);
            st.h.copy_from_slice(&sh.data[u * hidden..(u + 1) * hidden]);
            st.history = VecDeque::with_capacity(len);
            if len == 0 {
                continue;
            }
            let xs = c.tensor(&format!("hist_x.{u}"))?;
            let hs = c.tensor(&format!("hist_h.{u}"))?;
            if xs.rows != len || hs.rows != len || hs.cols != hidden {
                return Err(bad(&format!("history of user {u} has the wrong shape")));
            }
            for (x, h) in xs.data.chunks(xs.cols.max(1)).zip(hs.data.chunks(hidden)) {
                st.history.push_back((x.to_vec(), h.to_vec()));
            }
        }
        for e in parse_event_str(&c.list("buffer")?.join("\n"))? {
            let u = s
                .users
                .index_of(&e.user_id)
                .ok_or_else(|| bad("buffered event of an unknown user"))?;
            s.buffers[u].push(e);
        }
        s.clock = none_or(c.meta("clock")?)?
            .map(|v| v.parse().map_err(|_| bad("malformed clock")))
            .transpose()?;
        Ok(s)
    }

    pub fn snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn restore(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

fn parse_list<T: std::str::FromStr>(items: &[String]) -> Result<Vec<T>> {
    items
        .iter()
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Checkpoint(format!("malformed list entry `{v}`")))
        })
        .collect()
}

/// Per-event CSV with a header line.
pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from(EVENT_CSV_HEADER);
    out.push('\n');
    for p in predictions {
        writeln!(out, "{}", p.csv_row()).expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::data::{simulate_stream, Network};
    use crate::eval::ablation::Experiment;
    use crate::eval::synthetic::{generate_synthetic, SynthConfig};
    use crate::params::{Gate, Tensor, Variant};
    use crate::topics::user_contexts;
    use crate::train::trainer::warm_state;

    fn fixture(variant: Variant) -> (Experiment, Checkpoint, RunConfig) {
        let synth = generate_synthetic(&SynthConfig {
            users: 12,
            items: 8,
            topics: 2,
            events_per_user: 12,
            seed: 9,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = RunConfig {
            topics: 2,
            embed_dim: 3,
            hidden: 5,
            top_k: 3,
            epochs: 3,
            lda_iterations: 30,
            ..RunConfig::default()
        };
        let exp = Experiment::from_events(&synth.events, &cfg, false).unwrap();
        let (ckpt, _) = exp.train(&cfg, variant).unwrap();
        (exp, ckpt, cfg)
    }

    fn policy(max_iters: usize, guard: bool) -> UpdatePolicy {
        UpdatePolicy {
            max_iters,
            top_k: 3,
            monotone_guard: guard,
            ..UpdatePolicy::default()
        }
    }

    #[test]
    fn source_event_is_buffered() {
        let (exp, ckpt, _) = fixture(Variant::Full);
        let mut s = exp.session(ckpt, policy(2, true), StreamRange::Test).unwrap();
        let user = s.users.id(0).to_string();
        let before = s.buffers[0].len();
        let e = InteractionEvent::source(i64::MAX / 2, &user, Network::SourceA, &["t0w00"]);
        assert_eq!(s.process_event(&e).unwrap(), Outcome::Buffered);
        assert_eq!(s.buffers[0].len(), before + 1);
    }

    #[test]
    fn cold_start_prediction() {
        let (exp, ckpt, _) = fixture(Variant::Full);
        let mut s = OnlineSession::new(
            ckpt,
            exp.context.clone(),
            policy(0, true),
            exp.data.item_features.clone(),
            exp.data.popularity.clone(),
        )
        .unwrap();
        let user = s.users.id(1).to_string();
        let item = s.catalog.id(2).to_string();
        let e = InteractionEvent::target(100, &user, &item);
        let Outcome::Predicted(p) = s.process_event(&e).unwrap() else {
            panic!("expected a prediction")
        };
        let hidden = s.params.shape().hidden;
        let step = StepInput {
            x: vec![0.0; 4],
            delta_t: f64::INFINITY,
            target: Some(2),
        };
        let fresh = forward_step(&s.params, &s.options, 1, &UserRecurrentState::new(hidden), &step, None).unwrap();
        assert_eq!(p.scores, fresh.y_hat);
        assert!(p.alpha.is_empty());
    }

    #[test]
    fn replay_count_and_offline_equivalence() {
        let (exp, ckpt, _) = fixture(Variant::Full);
        let (s, preds) = exp.stream(ckpt.clone(), policy(0, true), StreamRange::Test).unwrap();
        assert_eq!(preds.len(), exp.data.count(|q| &q.test));
        assert!(!preds.is_empty());
        // with updates off the stream is a pure evaluation
        assert_eq!(s.params, ckpt.params);
        assert_eq!(s.optimizer, ckpt.optimizer);
        // and agrees with an offline replay of each user's test segment
        let opts = ckpt.options();
        for seq in &exp.data.sequences {
            let state = warm_state(&ckpt.params, &opts, seq, true).unwrap();
            let tape = forward_sequence(&ckpt.params, &opts, seq.user, &seq.test.steps, state, Dropout::Off).unwrap();
            let mine: Vec<&Prediction> = preds.iter().filter(|p| p.user == seq.user).collect();
            assert_eq!(mine.len(), tape.steps.len());
            for (p, t) in mine.iter().zip(&tape.steps) {
                for (a, b) in p.scores.iter().zip(&t.y_hat) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_iteration_raises_observed_probability() {
        let (exp, ckpt, _) = fixture(Variant::Full);
        let (_, preds) = exp.stream(ckpt, policy(1, false), StreamRange::Test).unwrap();
        for p in &preds {
            let o = &p.update.observed;
            assert_eq!(o.len(), 2);
            assert!(o[1] > o[0], "{o:?}");
        }
    }

    #[test]
    fn updates_never_lower_observed_probability() {
        for v in Variant::ALL {
            let (exp, ckpt, _) = fixture(v);
            let (s, preds) = exp.stream(ckpt.clone(), policy(2, true), StreamRange::Test).unwrap();
            for p in &preds {
                assert!(p.update.observed.windows(2).all(|w| w[1] >= w[0] - 1e-9));
                assert!(!p.update.aborted);
            }
            assert_ne!(s.params, ckpt.params);
        }
    }

    #[test]
    fn first_prediction_precedes_any_update() {
        let (exp, ckpt, _) = fixture(Variant::Full);
        let (_, on) = exp.stream(ckpt.clone(), policy(2, true), StreamRange::Test).unwrap();
        let (_, off) = exp.stream(ckpt, policy(0, true), StreamRange::Test).unwrap();
        assert_eq!(on[0].scores, off[0].scores);
        assert_eq!(on[0].list, off[0].list);
        assert_ne!(on.last().unwrap().scores, off.last().unwrap().scores);
    }

    #[test]
    fn ordering_and_skips() {
        let (exp, ckpt, _) = fixture(Variant::NoAt);
        let mut s = exp.session(ckpt, policy(1, true), StreamRange::Test).unwrap();
        let user = s.users.id(0).to_string();
        let item = s.catalog.id(0).to_string();
        let t = 2_000_000_000;
        assert!(matches!(
            s.process_event(&InteractionEvent::target(t, &user, &item)).unwrap(),
            Outcome::Predicted(_)
        ));
        // equal timestamps are accepted
        assert!(matches!(
            s.process_event(&InteractionEvent::target(t, &user, &item)).unwrap(),
            Outcome::Predicted(_)
        ));
        let seen = s.steps_seen[0];
        assert!(matches!(
            s.process_event(&InteractionEvent::target(t + 1, &user, "nope"))
                .unwrap(),
            Outcome::Skipped(_)
        ));
        assert!(matches!(
            s.process_event(&InteractionEvent::target(t + 1, "stranger", &item))
                .unwrap(),
            Outcome::Skipped(_)
        ));
        assert_eq!(s.steps_seen[0], seen);
        let err = s.process_event(&InteractionEvent::target(t, &user, &item)).unwrap_err();
        assert!(matches!(err, Error::OutOfOrder { .. }));
    }

    #[test]
    fn non_finite_loss_rolls_back() {
        let (exp, mut ckpt, _) = fixture(Variant::Full);
        ckpt.params.tensor_mut(Tensor::W(Gate::Output))[0] = f64::NAN;
        let mut s = exp.session(ckpt, policy(2, true), StreamRange::Test).unwrap();
        let before: Vec<u64> = s.params.flatten().iter().map(|v| v.to_bits()).collect();
        let e = simulate_stream(&exp.split, StreamRange::Test)
            .find(|e| e.item().is_some())
            .unwrap();
        let Outcome::Predicted(p) = s.process_event(&e).unwrap() else {
            panic!("expected a prediction")
        };
        assert!(p.update.aborted);
        let after: Vec<u64> = s.params.flatten().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn table_context_matches_model_context() {
        let (exp, ckpt, _) = fixture(Variant::Full);
        let ContextSource::Model(m) = &exp.context else {
            unreachable!()
        };
        let mut table = crate::topics::ContextTable::new();
        for user in exp.split.users() {
            table.insert(user.to_string(), user_contexts(&exp.split.user_events(user), m));
        }
        let table_exp = Experiment::new(exp.split.clone(), ContextSource::Table(table)).unwrap();
        let (_, a) = exp.stream(ckpt.clone(), policy(2, true), StreamRange::Test).unwrap();
        let (_, b) = table_exp.stream(ckpt, policy(2, true), StreamRange::Test).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.list, q.list);
            for (x, y) in p.scores.iter().zip(&q.scores) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn snapshot_restore_continues_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.ckpt");
        for variant in [Variant::Full, Variant::CLSTM] {
            let (exp, ckpt, _) = fixture(variant);
            let events: Vec<InteractionEvent> = simulate_stream(&exp.split, StreamRange::Test).collect();
            let half = events.len() / 2;
            let mut s = exp.session(ckpt, policy(2, true), StreamRange::Test).unwrap();
            s.run(events[..half].iter().cloned()).unwrap();
            s.snapshot(&path).unwrap();
            let mut r = OnlineSession::restore(&path).unwrap();
            assert_eq!(r, s);
            let a = s.run(events[half..].iter().cloned()).unwrap();
            let b = r.run(events[half..].iter().cloned()).unwrap();
            assert_eq!(a, b);
            assert_eq!(r, s);
        }
    }

    #[test]
    fn table_session_snapshot_round_trips() {
        let (exp, ckpt, _) = fixture(Variant::NoHO);
        let ContextSource::Model(m) = &exp.context else {
            unreachable!()
        };
        let mut table = crate::topics::ContextTable::new();
        for user in exp.split.users() {
            table.insert(user.to_string(), user_contexts(&exp.split.user_events(user), m));
        }
        let exp = Experiment::new(exp.split.clone(), ContextSource::Table(table)).unwrap();
        let s = exp.session(ckpt, policy(1, false), StreamRange::Test).unwrap();
        let back =
            OnlineSession::from_container(&Container::from_bytes(&s.to_container().to_bytes().unwrap()).unwrap())
                .unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn corrupted_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let (exp, ckpt, _) = fixture(Variant::NoTIF);
        let s = exp.session(ckpt.clone(), policy(1, true), StreamRange::Test).unwrap();
        s.snapshot(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(OnlineSession::restore(&path).is_err());
        // a model checkpoint is not a session
        ckpt.save(&path).unwrap();
        assert!(OnlineSession::restore(&path).is_err());
    }

    #[test]
    fn event_csv_format() {
        let (exp, ckpt, _) = fixture(Variant::Full);
        let (_, preds) = exp.stream(ckpt, policy(0, true), StreamRange::Test).unwrap();
        let csv = predictions_csv(&preds);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(EVENT_CSV_HEADER));
        for (line, p) in lines.zip(&preds) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 6);
            if p.hit() {
                assert_eq!(f[2], "1");
                assert!(f[3].parse::<usize>().unwrap() <= 3);
            } else {
                assert_eq!((f[2], f[3]), ("0", "-1"));
            }
        }
    }
}
