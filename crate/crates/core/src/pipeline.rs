//! Turns a dataset split plus a context source into per-user step sequences.

use crate::data::{DatasetSplit, IdIndex, InteractionEvent};
use crate::error::{Error, Result};
use crate::model::StepInput;
use crate::topics::{user_contexts, ContextTable, TopicContext, TopicModel};

/// Fallback time constant when the training data has no consecutive target
/// events: one day.
pub const DEFAULT_TAU: f64 = 86_400.0;

/// Where per-step contexts come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextSource {
    Model(TopicModel),
    Table(ContextTable),
}

impl ContextSource {
    pub fn num_topics(&self) -> Result<usize> {
        match self {
            ContextSource::Model(m) => Ok(m.num_topics()),
            ContextSource::Table(t) => t
                .values()
                .flatten()
                .next()
                .map(TopicContext::num_topics)
                .ok_or_else(|| Error::InvalidArgument("empty context table".into())),
        }
    }

    /// Contexts of all target events of one user, whose full event list is
    /// given in time order.
    pub fn contexts(&self, user_id: &str, events: &[&InteractionEvent]) -> Result<Vec<TopicContext>> {
        match self {
            ContextSource::Model(m) => Ok(user_contexts(events, m)),
            ContextSource::Table(t) => {
                let times: Vec<i64> = events
                    .iter()
                    .filter(|e| e.item().is_some())
                    .map(|e| e.timestamp)
                    .collect();
                let rows = t.get(user_id).map(Vec::as_slice).unwrap_or(&[]);
                if rows.len() < times.len() {
                    return Err(Error::InvalidArgument(format!(
                        "context table has {} rows for user {user_id}, need {}",
                        rows.len(),
                        times.len()
                    )));
                }
                for (row, &t) in rows.iter().zip(&times) {
                    if row.step_time != t {
                        return Err(Error::InvalidArgument(format!(
                            "context for user {user_id} at {} does not match target event at {t}",
                            row.step_time
                        )));
                    }
                }
                Ok(rows[..times.len()].to_vec())
            }
        }
    }
}

/// Consecutive target steps with their timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segment {
    pub steps: Vec<StepInput>,
    pub times: Vec<i64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSequence {
    pub user: usize,
    pub user_id: String,
    pub train: Segment,
    pub validation: Segment,
    pub test: Segment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub users: IdIndex,
    pub catalog: IdIndex,
    pub num_topics: usize,
    pub sequences: Vec<UserSequence>,
    /// Mean gap between consecutive training target events, in seconds.
    pub tau: f64,
    /// Training interaction count per item.
    pub popularity: Vec<u64>,
    /// Mean training context of each item's interactions.
    pub item_features: Vec<Vec<f64>>,
}

impl PreparedData {
    pub fn num_items(&self) -> usize {
        self.catalog.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Target steps over all users in one part.
    pub fn count(&self, pick: impl Fn(&UserSequence) -> &Segment) -> usize {
        self.sequences.iter().map(|s| pick(s).len()).sum()
    }
}

pub fn prepare(split: &DatasetSplit, source: &ContextSource) -> Result<PreparedData> {
    let users = IdIndex::from_ids(split.users().map(str::to_string));
    let catalog = split.catalog.clone();
    let num_topics = source.num_topics()?;
    let mut sequences = Vec::with_capacity(users.len());
    let mut gaps = (0.0, 0usize);
    let mut popularity = vec![0u64; catalog.len()];
    let mut feature_sum = vec![vec![0.0; 2 * num_topics]; catalog.len()];

    for (u, user_id) in users.ids().iter().enumerate() {
        let events = split.user_events(user_id);
        let contexts = source.contexts(user_id, &events)?;
        let targets: Vec<&InteractionEvent> = events.iter().copied().filter(|e| e.item().is_some()).collect();
        let n_train = split.target_count(crate::data::Part::Train, user_id);
        let n_val = split.target_count(crate::data::Part::Validation, user_id);
        let mut seq = UserSequence {
            user: u,
            user_id: user_id.clone(),
            train: Segment::default(),
            validation: Segment::default(),
            test: Segment::default(),
        };
        for (i, (ctx, e)) in contexts.into_iter().zip(&targets).enumerate() {
            if ctx.x.len() != 2 * num_topics {
                return Err(Error::DimensionMismatch {
                    expected: 2 * num_topics,
                    actual: ctx.x.len(),
                });
            }
            let item = e.item().expect("target event");
            let target = catalog
                .index_of(item)
                .ok_or_else(|| Error::UnknownItem(item.to_string()))?;
            let segment = if i < n_train {
                popularity[target] += 1;
                for (f, v) in feature_sum[target].iter_mut().zip(&ctx.x) {
                    *f += v;
                }
                if ctx.delta_t.is_finite() {
                    gaps.0 += ctx.delta_t;
                    gaps.1 += 1;
                }
                &mut seq.train
            } else if i < n_train + n_val {
                &mut seq.validation
            } else {
                &mut seq.test
            };
            segment.steps.push(StepInput {
                x: ctx.x,
                delta_t: ctx.delta_t,
                target: Some(target),
            });
            segment.times.push(e.timestamp);
        }
        sequences.push(seq);
    }

    let tau = if gaps.1 > 0 && gaps.0 > 0.0 {
        gaps.0 / gaps.1 as f64
    } else {
        DEFAULT_TAU
    };
    let item_features = feature_sum
        .into_iter()
        .zip(&popularity)
        .map(|(f, &n)| {
            if n == 0 {
                f
            } else {
                f.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect();
    Ok(PreparedData {
        users,
        catalog,
        num_topics,
        sequences,
        tau,
        popularity,
        item_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{chronological_split, Network, SplitRatios};

    fn model() -> TopicModel {
        TopicModel::from_parts(IdIndex::from_ids(["a", "b"]), vec![0.9, 0.1, 0.1, 0.9], 1.0, 0.01).unwrap()
    }

    fn events() -> Vec<InteractionEvent> {
        let mut ev = Vec::new();
        for i in 0..10 {
            ev.push(InteractionEvent::source(100 * i, "u", Network::SourceA, &["a"]));
            ev.push(InteractionEvent::target(
                100 * i + 50,
                "u",
                if i % 2 == 0 { "x" } else { "y" },
            ));
        }
        ev.push(InteractionEvent::target(7, "v", "x"));
        ev
    }

    #[test]
    fn segments_follow_split() {
        let split = chronological_split(&events(), SplitRatios::default()).unwrap();
        let data = prepare(&split, &ContextSource::Model(model())).unwrap();
        let u = &data.sequences[data.users.index_of("u").unwrap()];
        assert_eq!((u.train.len(), u.validation.len(), u.test.len()), (7, 1, 2));
        assert_eq!(u.train.steps[0].delta_t, f64::INFINITY);
        assert_eq!(u.train.steps[1].delta_t, 100.0);
        assert_eq!(u.test.times, vec![850, 950]);
        // every gap between consecutive training targets is 100 s
        assert_eq!(data.tau, 100.0);
        assert_eq!(data.popularity, vec![5, 3]);
        let total: f64 = u.train.steps[3].x.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_source_matches_model_source() {
        let split = chronological_split(&events(), SplitRatios::default()).unwrap();
        let m = model();
        let mut table = ContextTable::new();
        for user in split.users() {
            table.insert(user.to_string(), user_contexts(&split.user_events(user), &m));
        }
        let a = prepare(&split, &ContextSource::Model(m)).unwrap();
        let b = prepare(&split, &ContextSource::Table(table)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_with_wrong_times_rejected() {
        let split = chronological_split(&events(), SplitRatios::default()).unwrap();
        let mut table = ContextTable::new();
        table.insert("v".into(), vec![TopicContext::empty("v", 8, f64::INFINITY, 2)]);
        table.insert("u".into(), user_contexts(&split.user_events("u"), &model()));
        assert!(prepare(&split, &ContextSource::Table(table)).is_err());
    }

    #[test]
    fn single_user_tau_falls_back() {
        let split = chronological_split(&[InteractionEvent::target(3, "w", "x")], SplitRatios::default()).unwrap();
        let data = prepare(&split, &ContextSource::Model(model())).unwrap();
        assert_eq!(data.tau, DEFAULT_TAU);
    }
}
