//! Offline training over users' training sequences.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cell::{top_k, UserRecurrentState};
use crate::error::{Error, Result};
use crate::eval::metrics::{hit_ratio, ndcg, user_average, EventMetrics, WindowMetrics};
use crate::model::{forward_sequence, Dropout, ModelOptions};
use crate::params::ParameterSet;
use crate::pipeline::{PreparedData, UserSequence};
use crate::train::adam::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip: Option<f64>,
    /// List length for validation metrics.
    pub top_k: usize,
    /// Backpropagation horizon in steps; `None` backpropagates through the
    /// whole sequence.
    pub truncation: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            dropout: 0.35,
            adam: AdamConfig::default(),
            clip: Some(5.0),
            top_k: 100,
            truncation: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        if self.top_k == 0 || self.truncation == Some(0) || self.clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::InvalidArgument(
                "top_k, truncation and clip must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean loss per training step.
    pub train_loss: f64,
    pub val_hr: f64,
    pub val_ndcg: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_hr,val_ndcg\n");
        for e in &self.epochs {
            writeln!(s, "{},{},{},{}", e.epoch, e.train_loss, e.val_hr, e.val_ndcg).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation hit ratio.
    pub params: ParameterSet,
    pub optimizer: AdamState,
    pub log: TrainingLog,
}

pub fn train_offline(
    data: &PreparedData,
    options: &ModelOptions,
    mut params: ParameterSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.top_k > data.num_items() {
        return Err(Error::InvalidArgument(format!(
            "top_k {} exceeds the {} catalog items",
            config.top_k,
            data.num_items()
        )));
    }
    if data.sequences.iter().all(|s| s.train.is_empty()) {
        return Err(Error::InvalidArgument("no training steps".into()));
    }
    let hidden = params.shape().hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = AdamState::new(config.adam, params.len());
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, ParameterSet, AdamState)> = None;
    let has_validation = data.sequences.iter().any(|s| !s.validation.is_empty());
    let mut order: Vec<usize> = (0..data.sequences.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut steps) = (0.0, 0usize);
        for &u in &order {
            let seq = &data.sequences[u];
            if seq.train.is_empty() {
                continue;
            }
            let tape = forward_sequence(
                &params,
                options,
                seq.user,
                &seq.train.steps,
                UserRecurrentState::new(hidden),
                Dropout::Sample {
                    p: config.dropout,
                    rng: &mut rng,
                },
            )?;
            let loss = tape.loss();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {loss} at epoch {epoch}, user {}",
                    seq.user_id
                )));
            }
            total += loss;
            steps += seq.train.len();
            let mut grad = tape.backward_truncated(&params, config.truncation);
            if let Some(c) = config.clip {
                grad.clip_global_norm(c);
            }
            optimizer.step(&mut params, &grad)?;
            if !params.all_finite() {
                return Err(Error::NonFinite(format!(
                    "parameters diverged at epoch {epoch}, user {}",
                    seq.user_id
                )));
            }
        }
        let val = evaluate_validation(data, options, &params, config.top_k)?;
        let row = EpochLog {
            epoch,
            train_loss: total / steps.max(1) as f64,
            val_hr: val.hr,
            val_ndcg: val.ndcg,
        };
        info!(
            "epoch {epoch}: loss {:.5} val HR@{} {:.4} NDCG {:.4}",
            row.train_loss, config.top_k, row.val_hr, row.val_ndcg
        );
        log.epochs.push(row);
        let better = best.as_ref().is_none_or(|(hr, _, _)| val.hr > *hr);
        if !has_validation || better {
            debug!("epoch {epoch} is the best so far");
            log.best_epoch = epoch;
            best = Some((val.hr, params.clone(), optimizer.clone()));
        }
    }
    let (params, optimizer) = match best {
        Some((_, p, o)) => (p, o),
        None => (params, optimizer),
    };
    Ok(TrainOutcome { params, optimizer, log })
}

/// Evaluation-mode state after replaying the given steps.
pub fn warm_state(
    params: &ParameterSet,
    options: &ModelOptions,
    seq: &UserSequence,
    include_validation: bool,
) -> Result<UserRecurrentState> {
    let hidden = params.shape().hidden;
    let mut steps = seq.train.steps.clone();
    if include_validation {
        steps.extend(seq.validation.steps.iter().cloned());
    }
    Ok(forward_sequence(
        params,
        options,
        seq.user,
        &steps,
        UserRecurrentState::new(hidden),
        Dropout::Off,
    )?
    .final_state)
}

/// Per-step predictions over each user's validation steps, continuing from
/// the training sequence; returns per-event metrics.
pub fn validation_events(
    data: &PreparedData,
    options: &ModelOptions,
    params: &ParameterSet,
    k: usize,
) -> Result<Vec<EventMetrics>> {
    let mut out = Vec::new();
    for seq in &data.sequences {
        if seq.validation.is_empty() {
            continue;
        }
        let state = warm_state(params, options, seq, false)?;
        let tape = forward_sequence(params, options, seq.user, &seq.validation.steps, state, Dropout::Off)?;
        for (i, (s, &t)) in tape.steps.iter().zip(&seq.validation.times).enumerate() {
            let list = top_k(&s.y_hat, k)?;
            let gt = [s.target.expect("validation steps carry targets")];
            out.push(EventMetrics {
                timestamp: t,
                user: seq.user,
                index: i,
                hr: hit_ratio(&list, &gt)?,
                ndcg: ndcg(&list, &gt)?,
                diversity: None,
                novelty: 0.0,
            });
        }
    }
    Ok(out)
}

pub fn evaluate_validation(
    data: &PreparedData,
    options: &ModelOptions,
    params: &ParameterSet,
    k: usize,
) -> Result<WindowMetrics> {
    Ok(user_average(&validation_events(data, options, params, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{chronological_split, IdIndex, InteractionEvent, Network, SplitRatios};
    use crate::params::{ModelShape, Variant};
    use crate::pipeline::{prepare, ContextSource};
    use crate::topics::TopicModel;

    fn one_user_one_item() -> PreparedData {
        let mut ev = Vec::new();
        for i in 0..6 {
            ev.push(InteractionEvent::source(1000 * i, "u", Network::SourceA, &["a"]));
            ev.push(InteractionEvent::target(1000 * i + 5, "u", "only"));
        }
        let split = chronological_split(&ev, SplitRatios::default()).unwrap();
        let model = TopicModel::from_parts(IdIndex::from_ids(["a"]), vec![1.0], 1.0, 0.01).unwrap();
        let mut data = prepare(&split, &ContextSource::Model(model)).unwrap();
        // two never-observed items keep the softmax non-trivial
        data.catalog = IdIndex::from_ids(["only", "x", "y"]);
        data.popularity.extend([0, 0]);
        data.item_features.extend([vec![0.0; 2], vec![0.0; 2]]);
        data
    }

    #[test]
    fn memorizes_single_item() {
        let data = one_user_one_item();
        let shape = ModelShape::new(Variant::Full, 1, 4, 5, 3, 1);
        let opts = ModelOptions::new(Variant::Full, data.tau, None);
        let params = ParameterSet::init(shape, &mut ChaCha8Rng::seed_from_u64(0));
        let run = |epochs| {
            let cfg = TrainConfig {
                epochs,
                top_k: 1,
                ..TrainConfig::default()
            };
            train_offline(&data, &opts, params.clone(), &cfg).unwrap().log
        };
        let log = run(50);
        assert_eq!(log.epochs.len(), 50);
        assert!(log.epochs[49].train_loss < log.epochs[0].train_loss);
        assert!(log.to_csv().starts_with("epoch,train_loss,val_hr,val_ndcg\n1,"));
    }

    #[test]
    fn training_is_reproducible() {
        let data = one_user_one_item();
        let shape = ModelShape::new(Variant::NoHO, 1, 3, 4, 3, 1);
        let opts = ModelOptions::new(Variant::NoHO, data.tau, None);
        let params = ParameterSet::init(shape, &mut ChaCha8Rng::seed_from_u64(3));
        let cfg = TrainConfig {
            epochs: 3,
            top_k: 1,
            ..TrainConfig::default()
        };
        let a = train_offline(&data, &opts, params.clone(), &cfg).unwrap();
        let b = train_offline(&data, &opts, params, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.optimizer, b.optimizer);
    }

    #[test]
    fn rejects_oversized_list() {
        let data = one_user_one_item();
        let shape = ModelShape::new(Variant::Full, 1, 2, 2, 3, 1);
        let opts = ModelOptions::new(Variant::Full, data.tau, None);
        let cfg = TrainConfig {
            top_k: 5,
            ..TrainConfig::default()
        };
        assert!(train_offline(&data, &opts, ParameterSet::zeros(shape), &cfg).is_err());
    }
}
