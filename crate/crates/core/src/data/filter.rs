use std::collections::{HashMap, HashSet};

use super::event::{InteractionEvent, Network};

/// Minimum interaction counts a user (and, for the target network, an item)
/// must reach to survive filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparsityThresholds {
    pub min_src_a: usize,
    pub min_src_b: usize,
    pub min_target: usize,
}

impl Default for SparsityThresholds {
    fn default() -> Self {
        SparsityThresholds {
            min_src_a: 10,
            min_src_b: 5,
            min_target: 10,
        }
    }
}

#[derive(Default)]
struct UserCounts {
    src_a: usize,
    src_b: usize,
    target: usize,
}

/// Drops sparse users and items until every survivor meets all thresholds at
/// once. Removing an item can push a user below threshold (and vice versa),
/// so the user and item passes repeat until nothing changes.
pub fn filter_sparse(events: &[InteractionEvent], thresholds: SparsityThresholds) -> Vec<InteractionEvent> {
    let mut alive = vec![true; events.len()];
    loop {
        let mut users: HashMap<&str, UserCounts> = HashMap::new();
        for (e, _) in events.iter().zip(&alive).filter(|(_, a)| **a) {
            let c = users.entry(e.user_id.as_str()).or_default();
            match e.network {
                Network::SourceA => c.src_a += 1,
                Network::SourceB => c.src_b += 1,
                Network::Target => c.target += 1,
            }
        }
        let dropped_users: HashSet<&str> = users
            .iter()
            .filter(|(_, c)| {
                c.src_a < thresholds.min_src_a || c.src_b < thresholds.min_src_b || c.target < thresholds.min_target
            })
            .map(|(u, _)| *u)
            .collect();

        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for (e, _) in events.iter().zip(&alive).filter(|(_, a)| **a) {
            if dropped_users.contains(e.user_id.as_str()) {
                continue;
            }
            if let Some(item) = e.item() {
                *item_counts.entry(item).or_default() += 1;
            }
        }

        let mut changed = false;
        for (e, a) in events.iter().zip(alive.iter_mut()) {
            if !*a {
                continue;
            }
            let drop = dropped_users.contains(e.user_id.as_str())
                || e.item()
                    .is_some_and(|i| item_counts.get(i).copied().unwrap_or(0) < thresholds.min_target);
            if drop {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    events
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(e, _)| e.clone())
        .collect()
}
