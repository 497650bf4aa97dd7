use super::event::InteractionEvent;
use super::split::DatasetSplit;

/// Which held-out parts a replay covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRange {
    Validation,
    Test,
    ValidationAndTest,
}

/// Single-consumer replay of held-out events in global time order.
pub struct EventStream {
    inner: std::vec::IntoIter<InteractionEvent>,
}

impl Iterator for EventStream {
    type Item = InteractionEvent;

    fn next(&mut self) -> Option<Self::Item> {
        self.inner.next()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.inner.size_hint()
    }
}

impl ExactSizeIterator for EventStream {}

/// Interleaves every user's held-out events by timestamp. Ties are broken by
/// `(user_id, network)`, so source posts precede a target event at the same
/// instant.
pub fn simulate_stream(split: &DatasetSplit, range: StreamRange) -> EventStream {
    let parts: &[&super::split::UserEvents] = match range {
        StreamRange::Validation => &[&split.validation],
        StreamRange::Test => &[&split.test],
        StreamRange::ValidationAndTest => &[&split.validation, &split.test],
    };
    let mut events: Vec<InteractionEvent> = parts.iter().flat_map(|m| m.values().flatten().cloned()).collect();
    events.sort_by(|a, b| (a.timestamp, &a.user_id, a.network).cmp(&(b.timestamp, &b.user_id, b.network)));
    EventStream {
        inner: events.into_iter(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{chronological_split, InteractionEvent, Network, SplitRatios};

    fn split_of(events: &[InteractionEvent]) -> DatasetSplit {
        chronological_split(
            events,
            SplitRatios {
                train: 0.0,
                validation: 0.0,
                test: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn orders_by_time_then_user() {
        // Each user keeps one training event (the floor of 0 is lifted to 1).
        let events = vec![
            InteractionEvent::target(0, "u2", "x"),
            InteractionEvent::target(0, "u1", "x"),
            InteractionEvent::target(2, "u2", "y"),
            InteractionEvent::target(1, "u1", "y"),
        ];
        let out: Vec<_> = simulate_stream(&split_of(&events), StreamRange::Test).collect();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].user_id, "u1");
        assert_eq!(out[1].user_id, "u2");
    }

    #[test]
    fn same_timestamp_breaks_on_user_then_network() {
        let events = vec![
            InteractionEvent::target(0, "b", "x"),
            InteractionEvent::target(0, "a", "x"),
            InteractionEvent::target(5, "b", "y"),
            InteractionEvent::target(5, "a", "y"),
            InteractionEvent::source(5, "a", Network::SourceB, &["w"]),
        ];
        // a source post at the first test instant belongs to validation
        let out: Vec<_> = simulate_stream(&split_of(&events), StreamRange::ValidationAndTest).collect();
        let order: Vec<(&str, Network)> = out.iter().map(|e| (e.user_id.as_str(), e.network)).collect();
        assert_eq!(
            order,
            vec![("a", Network::SourceB), ("a", Network::Target), ("b", Network::Target)]
        );
    }

    #[test]
    fn yields_every_test_event_of_five_users() {
        let mut events = Vec::new();
        for (u, n) in [("a", 10), ("b", 5), ("c", 3), ("d", 1), ("e", 20)] {
            for i in 0..n {
                events.push(InteractionEvent::target(i as i64 * 7 + u.len() as i64, u, "it"));
            }
        }
        let split = chronological_split(&events, SplitRatios::default()).unwrap();
        // test counts: 10 -> 2, 5 -> 2, 3 -> 1, 1 -> 0, 20 -> 4
        let expected: usize = split.test.values().map(Vec::len).sum();
        assert_eq!(expected, 2 + 2 + 1 + 0 + 4);
        let out: Vec<_> = simulate_stream(&split, StreamRange::Test).collect();
        assert_eq!(out.len(), expected);
        assert!(out.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }
}
