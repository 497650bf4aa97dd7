use crate::data::{InteractionEvent, Network};

use super::lda::TopicModel;

/// Topical summary of one user's source-network posts in the window
/// `(previous target event, step_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicContext {
    pub user_id: String,
    pub step_time: i64,
    /// Seconds since the user's previous target event; infinite for the
    /// first one.
    pub delta_t: f64,
    /// `x_a | x_b`, each of length `num_topics`.
    pub x: Vec<f64>,
}

impl TopicContext {
    pub fn empty(user_id: &str, step_time: i64, delta_t: f64, num_topics: usize) -> Self {
        TopicContext {
            user_id: user_id.to_string(),
            step_time,
            delta_t,
            x: vec![0.0; 2 * num_topics],
        }
    }

    pub fn num_topics(&self) -> usize {
        self.x.len() / 2
    }

    pub fn x_a(&self) -> &[f64] {
        &self.x[..self.num_topics()]
    }

    pub fn x_b(&self) -> &[f64] {
        &self.x[self.num_topics()..]
    }
}

/// Sums per-document topic distributions for each source network.
///
/// `window` holds the user's events already restricted to the window; target
/// events in it are ignored.
pub fn window_aggregate<'a>(
    user_id: &str,
    step_time: i64,
    previous: Option<i64>,
    window: impl IntoIterator<Item = &'a InteractionEvent>,
    model: &TopicModel,
) -> TopicContext {
    let k = model.num_topics();
    let delta_t = previous.map_or(f64::INFINITY, |p| (step_time - p) as f64);
    let mut ctx = TopicContext::empty(user_id, step_time, delta_t, k);
    for e in window {
        let Some(tokens) = e.tokens() else { continue };
        let offset = match e.network {
            Network::SourceA => 0,
            Network::SourceB => k,
            Network::Target => continue,
        };
        for (slot, p) in ctx.x[offset..offset + k].iter_mut().zip(model.infer_topics(tokens)) {
            *slot += p;
        }
    }
    ctx
}

/// One context per target event of a user, from that user's full event list
/// in time order.
pub fn user_contexts(events: &[&InteractionEvent], model: &TopicModel) -> Vec<TopicContext> {
    let mut out = Vec::new();
    let mut previous: Option<i64> = None;
    let mut start = 0;
    for e in events.iter().filter(|e| e.item().is_some()) {
        let t = e.timestamp;
        let lower = previous.unwrap_or(i64::MIN);
        while start < events.len() && events[start].timestamp <= lower {
            start += 1;
        }
        let window = events[start..].iter().take_while(|s| s.timestamp <= t).copied();
        out.push(window_aggregate(&e.user_id, t, previous, window, model));
        previous = Some(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::IdIndex;

    fn two_topic_model() -> TopicModel {
        let vocab = IdIndex::from_ids(["a", "b"]);
        // topic 0 emits "a", topic 1 emits "b", almost surely
        TopicModel::from_parts(vocab, vec![0.999, 0.001, 0.001, 0.999], 1.0, 0.01).unwrap()
    }

    #[test]
    fn empty_window_is_zero() {
        let m = two_topic_model();
        let ctx = window_aggregate("u", 10, Some(4), std::iter::empty(), &m);
        assert_eq!(ctx.x, vec![0.0; 4]);
        assert_eq!(ctx.delta_t, 6.0);
    }

    #[test]
    fn documents_sum_per_network() {
        let m = two_topic_model();
        let d1 = InteractionEvent::source(1, "u", Network::SourceA, &["a"]);
        let d2 = InteractionEvent::source(2, "u", Network::SourceA, &["b", "b"]);
        let d3 = InteractionEvent::source(2, "u", Network::SourceB, &["a", "b"]);
        let ctx = window_aggregate("u", 3, None, [&d1, &d2, &d3], &m);
        let p1 = m.infer_topics(&["a"]);
        let p2 = m.infer_topics(&["b", "b"]);
        let p3 = m.infer_topics(&["a", "b"]);
        assert_eq!(ctx.x_a(), &[p1[0] + p2[0], p1[1] + p2[1]]);
        assert_eq!(ctx.x_b(), &p3[..]);
        assert!((ctx.x_a().iter().sum::<f64>() - 2.0).abs() < 1e-6);
        assert!(ctx.delta_t.is_infinite());
    }

    #[test]
    fn windows_are_half_open() {
        let m = two_topic_model();
        let events = [
            InteractionEvent::source(1, "u", Network::SourceA, &["a"]),
            InteractionEvent::target(5, "u", "i1"),
            InteractionEvent::source(5, "u", Network::SourceB, &["b"]),
            InteractionEvent::source(6, "u", Network::SourceA, &["b"]),
            InteractionEvent::target(9, "u", "i2"),
            InteractionEvent::target(12, "u", "i3"),
        ];
        let refs: Vec<&InteractionEvent> = events.iter().collect();
        let ctxs = user_contexts(&refs, &m);
        assert_eq!(ctxs.len(), 3);
        // (-inf, 5]: the src_a post at 1 and the src_b post at 5
        assert!((ctxs[0].x_a().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((ctxs[0].x_b().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // (5, 9]: only the src_a post at 6
        assert!((ctxs[1].x_a().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(ctxs[1].x_b(), &[0.0, 0.0]);
        assert_eq!(ctxs[1].delta_t, 4.0);
        assert_eq!(ctxs[2].x, vec![0.0; 4]);
        assert_eq!(ctxs[2].delta_t, 3.0);
    }
}
