//! Synthetic cross-network streams with planted topical structure.
//!
//! Every item belongs to one topic and every topic owns a block of words.
//! Each user holds a topic preference vector. Before each target event the
//! user draws a topic from the current preference, posts a few short
//! documents that mostly use that topic's words, and then interacts with an
//! item of that topic. At each drift time every preference is redrawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::data::{sort_events, InteractionEvent, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub topics: usize,
    pub events_per_user: usize,
    /// Per-user event counts vary uniformly by up to this much.
    pub events_jitter: usize,
    pub words_per_topic: usize,
    pub words_per_doc: usize,
    /// Mean number of source documents before each target event.
    pub docs_per_step: f64,
    /// Probability that a document is about the step's topic rather than a
    /// fresh draw from the preference.
    pub coupling: f64,
    /// Dirichlet concentration of user preferences.
    pub concentration: f64,
    /// Drift instants as fractions of the simulated time span.
    pub drift_at: Vec<f64>,
    pub start: i64,
    /// Mean seconds between a user's target events.
    pub mean_gap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 200,
            items: 50,
            topics: 5,
            events_per_user: 20,
            events_jitter: 3,
            words_per_topic: 12,
            words_per_doc: 6,
            docs_per_step: 1.5,
            coupling: 0.8,
            concentration: 0.3,
            drift_at: Vec::new(),
            start: 1_600_000_000 - 1_600_000_000 % 86_400,
            mean_gap: 86_400.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.users == 0 || self.topics == 0 || self.events_per_user == 0 {
            return bad("users, topics and events per user must be positive");
        }
        if self.items < self.topics {
            return bad("need at least one item per topic");
        }
        if self.events_jitter >= self.events_per_user {
            return bad("jitter must be smaller than events per user");
        }
        if self.words_per_topic == 0 || self.words_per_doc == 0 {
            return bad("documents need words");
        }
        if !(0.0..=1.0).contains(&self.coupling) || !(self.concentration > 0.0) || !(self.mean_gap >= 1.0) {
            return bad("coupling in [0, 1], positive concentration and gap >= 1 s required");
        }
        if !(self.docs_per_step >= 0.0) || self.drift_at.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return bad("documents per step must be >= 0 and drift fractions in [0, 1]");
        }
        Ok(())
    }

    /// Length of the simulated period in seconds.
    pub fn span(&self) -> i64 {
        ((self.events_per_user + self.events_jitter) as f64 * self.mean_gap).round() as i64
    }

    pub fn drift_times(&self) -> Vec<i64> {
        let mut t: Vec<i64> = self
            .drift_at
            .iter()
            .map(|f| self.start + (f * self.span() as f64).round() as i64)
            .collect();
        t.sort_unstable();
        t
    }
}

pub fn item_id(i: usize) -> String {
    format!("item{i:03}")
}

pub fn user_id(u: usize) -> String {
    format!("user{u:04}")
}

pub fn word(topic: usize, j: usize) -> String {
    format!("t{topic}w{j:02}")
}

/// Topic of an item: items are dealt round-robin.
pub fn item_topic(item: usize, topics: usize) -> usize {
    item % topics
}

/// Topic owning a generated word.
pub fn word_topic(w: &str) -> Option<usize> {
    w.strip_prefix('t')?.split_once('w')?.0.parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub events: Vec<InteractionEvent>,
    pub drift_times: Vec<i64>,
    pub config: SynthConfig,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Dirichlet draws as normalized Gamma variates
    let gamma = Gamma::new(cfg.concentration, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let draw_pref = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let g: Vec<f64> = (0..cfg.topics)
            .map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE))
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    };
    let docs = if cfg.docs_per_step > 0.0 {
        Some(Poisson::new(cfg.docs_per_step).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let pools: Vec<Vec<usize>> = (0..cfg.topics)
        .map(|z| (0..cfg.items).filter(|&i| item_topic(i, cfg.topics) == z).collect())
        .collect();
    let drifts = cfg.drift_times();
    let mut events = Vec::new();

    for u in 0..cfg.users {
        let uid = user_id(u);
        let n = cfg.events_per_user - cfg.events_jitter + rng.random_range(0..=2 * cfg.events_jitter);
        let mut pref = draw_pref(&mut rng);
        let mut next_drift = 0;
        let mut t = cfg.start + rng.random_range(0..(cfg.mean_gap as i64).max(1));
        for _ in 0..n {
            let gap = (-rng.random::<f64>().max(1e-12).ln() * cfg.mean_gap).max(60.0) as i64;
            let prev = t;
            t += gap;
            while next_drift < drifts.len() && drifts[next_drift] <= t {
                pref = draw_pref(&mut rng);
                next_drift += 1;
            }
            let z = categorical(&pref, &mut rng);
            let n_docs = docs.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            for _ in 0..n_docs {
                let dz = if rng.random::<f64>() < cfg.coupling {
                    z
                } else {
                    categorical(&pref, &mut rng)
                };
                let words: Vec<String> = (0..cfg.words_per_doc)
                    .map(|_| word(dz, rng.random_range(0..cfg.words_per_topic)))
                    .collect();
                let refs: Vec<&str> = words.iter().map(String::as_str).collect();
                let network = if rng.random::<bool>() {
                    Network::SourceA
                } else {
                    Network::SourceB
                };
                let when = prev + 1 + rng.random_range(0..(t - prev).max(1));
                events.push(InteractionEvent::source(when.min(t), &uid, network, &refs));
            }
            let pool = &pools[z];
            let item = pool[rng.random_range(0..pool.len())];
            events.push(InteractionEvent::target(t, &uid, &item_id(item)));
        }
    }
    sort_events(&mut events);
    Ok(SyntheticData {
        events,
        drift_times: drifts,
        config: cfg.clone(),
    })
}

fn categorical(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u = rng.random::<f64>() * p.iter().sum::<f64>();
    for (i, w) in p.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    p.len() - 1
}
