use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use log::warn;

use super::event::{parse_event_log, write_event_log, InteractionEvent};
use crate::error::{Error, Result};

/// Ordered id → dense index mapping. Used for the item catalog and the user
/// registry; the index space is frozen once built.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdIndex {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

pub type ItemCatalog = IdIndex;

impl IdIndex {
    /// Builds a lexicographically ordered index from arbitrary ids.
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        ids.sort();
        ids.dedup();
        Self::from_ordered(ids).expect("deduplicated")
    }

    /// Keeps the given order; duplicates are an error.
    pub fn from_ordered(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate id `{id}`")));
            }
        }
        Ok(IdIndex { ids, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for id in &self.ids {
            text.push_str(id);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ids = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self::from_ordered(ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            validation: 0.10,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidArgument(format!("split ratios out of range: {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split ratios must sum to 1: {self:?}")));
        }
        Ok(())
    }

    /// Target-event counts `(train, validation, test)` for a user with `n`
    /// target events. Floors the first two parts; the remainder goes to test.
    /// A user always keeps at least one training event.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| (r * n as f64 + 1e-9).floor() as usize;
        let train = floor(self.train).max(1).min(n);
        let validation = floor(self.validation).min(n - train);
        (train, validation, n - train - validation)
    }
}

pub type UserEvents = BTreeMap<String, Vec<InteractionEvent>>;

/// Per-user chronological split plus the frozen item catalog.
///
/// Every user appears as a key in all three maps, possibly with an empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: UserEvents,
    pub validation: UserEvents,
    pub test: UserEvents,
    pub catalog: ItemCatalog,
    /// Users dropped because they had no target events.
    pub skipped_users: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Validation,
    Test,
}

impl DatasetSplit {
    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.train.keys().map(String::as_str)
    }

    pub fn part(&self, part: Part) -> &UserEvents {
        match part {
            Part::Train => &self.train,
            Part::Validation => &self.validation,
            Part::Test => &self.test,
        }
    }

    /// All of one user's events across the three parts, in time order.
    pub fn user_events(&self, user: &str) -> Vec<&InteractionEvent> {
        [&self.train, &self.validation, &self.test]
            .iter()
            .filter_map(|m| m.get(user))
            .flatten()
            .collect()
    }

    pub fn target_count(&self, part: Part, user: &str) -> usize {
        self.part(part)
            .get(user)
            .map_or(0, |es| es.iter().filter(|e| e.item().is_some()).count())
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_event_log(dir.join("train.tsv"), self.train.values().flatten())?;
        write_event_log(dir.join("validation.tsv"), self.validation.values().flatten())?;
        write_event_log(dir.join("test.tsv"), self.test.values().flatten())?;
        self.catalog.write(dir.join("catalog.txt"))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let group = |events: Vec<InteractionEvent>| {
            let mut map = UserEvents::new();
            for e in events {
                map.entry(e.user_id.clone()).or_default().push(e);
            }
            map
        };
        let mut split = DatasetSplit {
            train: group(parse_event_log(dir.join("train.tsv"))?),
            validation: group(parse_event_log(dir.join("validation.tsv"))?),
            test: group(parse_event_log(dir.join("test.tsv"))?),
            catalog: IdIndex::read(dir.join("catalog.txt"))?,
            skipped_users: Vec::new(),
        };
        let users: Vec<String> = split
            .train
            .keys()
            .chain(split.validation.keys())
            .chain(split.test.keys())
            .cloned()
            .collect();
        for u in users {
            for m in [&mut split.train, &mut split.validation, &mut split.test] {
                m.entry(u.clone()).or_default();
            }
        }
        Ok(split)
    }
}

/// Splits each user's history chronologically by target events.
///
/// Source events follow the target-time ranges: up to and including the last
/// training target go to train, up to and including the first test target go
/// to validation, the rest to test. Boundary ties land in the earlier part.
pub fn chronological_split(events: &[InteractionEvent], ratios: SplitRatios) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut per_user: BTreeMap<&str, Vec<&InteractionEvent>> = BTreeMap::new();
    for e in events {
        per_user.entry(e.user_id.as_str()).or_default().push(e);
    }

    let mut split = DatasetSplit {
        train: UserEvents::new(),
        validation: UserEvents::new(),
        test: UserEvents::new(),
        catalog: IdIndex::default(),
        skipped_users: Vec::new(),
    };
    let mut items = Vec::new();

    for (user, mut evs) in per_user {
        evs.sort_by_key(|e| e.timestamp);
        let targets: Vec<&InteractionEvent> = evs.iter().copied().filter(|e| e.item().is_some()).collect();
        if targets.is_empty() {
            warn!("user {user} has no target events; skipped");
            split.skipped_users.push(user.to_string());
            continue;
        }
        let (n_train, n_val, n_test) = ratios.counts(targets.len());
        let last_train = targets[n_train - 1].timestamp;
        let source_cut = if n_test > 0 {
            Some(targets[n_train + n_val].timestamp)
        } else if n_val > 0 {
            Some(i64::MAX)
        } else {
            None
        };

        let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
        let mut target_idx = 0;
        for e in evs {
            if e.item().is_some() {
                items.push(e.item().unwrap().to_string());
                if target_idx < n_train {
                    tr.push(e.clone());
                } else if target_idx < n_train + n_val {
                    va.push(e.clone());
                } else {
                    te.push(e.clone());
                }
                target_idx += 1;
            } else if e.timestamp <= last_train {
                tr.push(e.clone());
            } else {
                match source_cut {
                    None => tr.push(e.clone()),
                    Some(cut) if e.timestamp <= cut => va.push(e.clone()),
                    Some(_) => te.push(e.clone()),
                }
            }
        }
        split.train.insert(user.to_string(), tr);
        split.validation.insert(user.to_string(), va);
        split.test.insert(user.to_string(), te);
    }
    split.catalog = IdIndex::from_ids(items);
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Network;

    fn targets(user: &str, n: usize) -> Vec<InteractionEvent> {
        (0..n)
            .map(|i| InteractionEvent::target(10 * i as i64, user, &format!("item{i:02}")))
            .collect()
    }

    #[test]
    fn ten_events_split_seven_one_two() {
        assert_eq!(SplitRatios::default().counts(10), (7, 1, 2));
        let split = chronological_split(&targets("u", 10), SplitRatios::default()).unwrap();
        assert_eq!(split.train["u"].len(), 7);
        assert_eq!(split.validation["u"].len(), 1);
        assert_eq!(split.test["u"].len(), 2);
    }

    #[test]
    fn single_event_goes_to_train() {
        assert_eq!(SplitRatios::default().counts(1), (1, 0, 0));
        let split = chronological_split(&targets("u", 1), SplitRatios::default()).unwrap();
        assert_eq!(split.train["u"].len(), 1);
        assert!(split.validation["u"].is_empty() && split.test["u"].is_empty());
    }

    #[test]
    fn floor_counts_small_users() {
        let r = SplitRatios::default();
        assert_eq!(r.counts(2), (1, 0, 1));
        assert_eq!(r.counts(3), (2, 0, 1));
        assert_eq!(r.counts(20), (14, 2, 4));
        assert_eq!(r.counts(30), (21, 3, 6));
    }

    #[test]
    fn user_without_targets_skipped() {
        let mut events = targets("a", 3);
        events.push(InteractionEvent::source(1, "b", Network::SourceA, &["x"]));
        let split = chronological_split(&events, SplitRatios::default()).unwrap();
        assert_eq!(split.skipped_users, vec!["b".to_string()]);
        assert!(!split.train.contains_key("b"));
    }

    #[test]
    fn source_events_follow_target_ranges() {
        // targets at 0..90 step 10: train 0..60, validation 70, test 80, 90
        let mut events = targets("u", 10);
        for t in [60, 61, 79, 80, 81] {
            events.push(InteractionEvent::source(t, "u", Network::SourceA, &["w"]));
        }
        let split = chronological_split(&events, SplitRatios::default()).unwrap();
        let src = |m: &UserEvents| -> Vec<i64> {
            m["u"]
                .iter()
                .filter(|e| e.item().is_none())
                .map(|e| e.timestamp)
                .collect()
        };
        assert_eq!(src(&split.train), vec![60]);
        assert_eq!(src(&split.validation), vec![61, 79, 80]);
        assert_eq!(src(&split.test), vec![81]);
    }

    #[test]
    fn invalid_ratios_rejected() {
        let bad = SplitRatios {
            train: 0.5,
            validation: 0.1,
            test: 0.1,
        };
        assert!(chronological_split(&[], bad).is_err());
    }

    #[test]
    fn catalog_is_lexicographic() {
        let events = vec![
            InteractionEvent::target(0, "u", "zeta"),
            InteractionEvent::target(1, "u", "alpha"),
            InteractionEvent::target(2, "v", "mid"),
        ];
        let split = chronological_split(&events, SplitRatios::default()).unwrap();
        assert_eq!(split.catalog.ids(), &["alpha", "mid", "zeta"]);
        assert_eq!(split.catalog.index_of("zeta"), Some(2));
    }
}
