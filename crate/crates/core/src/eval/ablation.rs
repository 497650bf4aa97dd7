//! End-to-end runs of each model variant: offline training followed by an
//! online predict-then-update pass over the test stream.

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::MetricReport;
use crate::config::RunConfig;
use crate::data::{chronological_split, filter_sparse, simulate_stream, DatasetSplit, InteractionEvent, StreamRange};
use crate::error::Result;
use crate::model::ModelOptions;
use crate::online::{OnlineSession, Prediction, UpdatePolicy};
use crate::params::{ParameterSet, Variant};
use crate::pipeline::{prepare, ContextSource, PreparedData};
use crate::topics::{fit_lda, TopicModel};
use crate::train::{train_offline, Checkpoint, TrainingLog};

/// A split with its contexts, shared by every variant of a comparison.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub split: DatasetSplit,
    pub context: ContextSource,
    pub data: PreparedData,
}

/// Fits the topic model on the training split's source posts.
pub fn fit_topics(split: &DatasetSplit, cfg: &RunConfig) -> Result<TopicModel> {
    let corpus: Vec<Vec<&str>> = split
        .train
        .values()
        .flatten()
        .filter_map(|e| e.tokens().map(|t| t.iter().map(String::as_str).collect()))
        .collect();
    fit_lda(&corpus, &cfg.lda())
}

impl Experiment {
    pub fn new(split: DatasetSplit, context: ContextSource) -> Result<Self> {
        let data = prepare(&split, &context)?;
        Ok(Experiment { split, context, data })
    }

    /// Split (optionally after sparsity filtering), fit topics, prepare.
    pub fn from_events(events: &[InteractionEvent], cfg: &RunConfig, filter: bool) -> Result<Self> {
        let kept;
        let events = if filter {
            kept = filter_sparse(events, cfg.thresholds());
            &kept[..]
        } else {
            events
        };
        let split = chronological_split(events, cfg.split_ratios())?;
        let model = fit_topics(&split, cfg)?;
        Self::new(split, ContextSource::Model(model))
    }

    pub fn options(&self, cfg: &RunConfig, variant: Variant) -> ModelOptions {
        ModelOptions::new(variant, cfg.tau.unwrap_or(self.data.tau), cfg.history_cap)
    }

    pub fn initial_params(&self, cfg: &RunConfig, variant: Variant) -> ParameterSet {
        let shape = cfg.shape(variant, self.data.num_items(), self.data.num_users());
        ParameterSet::init(shape, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
    }

    pub fn train(&self, cfg: &RunConfig, variant: Variant) -> Result<(Checkpoint, TrainingLog)> {
        let options = self.options(cfg, variant);
        let out = train_offline(&self.data, &options, self.initial_params(cfg, variant), &cfg.train())?;
        let mut echo = cfg.clone();
        echo.variant = variant;
        let checkpoint = Checkpoint {
            variant,
            params: out.params,
            optimizer: out.optimizer,
            tau: options.cell.tau,
            history_cap: options.cell.history_cap,
            users: self.data.users.clone(),
            catalog: self.data.catalog.clone(),
            config: echo.model_pairs(),
        };
        Ok((checkpoint, out.log))
    }

    pub fn session(&self, checkpoint: Checkpoint, policy: UpdatePolicy, range: StreamRange) -> Result<OnlineSession> {
        let mut s = OnlineSession::new(
            checkpoint,
            self.context.clone(),
            policy,
            self.data.item_features.clone(),
            self.data.popularity.clone(),
        )?;
        s.warm_start(&self.split, range)?;
        Ok(s)
    }

    /// Online pass over the held-out part after `range`'s predecessors.
    pub fn stream(
        &self,
        checkpoint: Checkpoint,
        policy: UpdatePolicy,
        range: StreamRange,
    ) -> Result<(OnlineSession, Vec<Prediction>)> {
        let mut s = self.session(checkpoint, policy, range)?;
        let predictions = s.run(simulate_stream(&self.split, range))?;
        Ok((s, predictions))
    }
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: Variant,
    /// Echo of the configuration that produced this run.
    pub config: RunConfig,
    /// Model after offline training, before the online pass.
    pub trained: Checkpoint,
    pub log: TrainingLog,
    pub session: OnlineSession,
    pub predictions: Vec<Prediction>,
    pub report: MetricReport,
}

pub fn run_ablation(variant: Variant, exp: &Experiment, cfg: &RunConfig) -> Result<VariantRun> {
    let (trained, log) = exp.train(cfg, variant)?;
    let (session, predictions) = exp.stream(trained.clone(), cfg.policy(), StreamRange::Test)?;
    let events = predictions.iter().map(|p| p.metrics.clone()).collect();
    let report = MetricReport::from_stream(variant.name(), cfg.seed, cfg.top_k, cfg.window, events);
    info!(
        "{variant}: test HR@{} {:.4} NDCG {:.4} over {} events",
        cfg.top_k, report.cumulative.hr, report.cumulative.ndcg, report.cumulative.n_events
    );
    let mut config = cfg.clone();
    config.variant = variant;
    Ok(VariantRun {
        variant,
        config,
        trained,
        log,
        session,
        predictions,
        report,
    })
}

/// Runs the variants concurrently; results come back in input order.
pub fn run_variants(variants: &[Variant], exp: &Experiment, cfg: &RunConfig) -> Result<Vec<VariantRun>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&v| scope.spawn(move || run_ablation(v, exp, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant run panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::synthetic::{generate_synthetic, SynthConfig};

    fn tiny() -> (Experiment, RunConfig) {
        let synth = generate_synthetic(&SynthConfig {
            users: 16,
            items: 8,
            topics: 2,
            events_per_user: 10,
            seed: 4,
            ..SynthConfig::default()
        })
        .unwrap();
        let cfg = RunConfig {
            topics: 2,
            embed_dim: 3,
            hidden: 4,
            top_k: 3,
            epochs: 2,
            lda_iterations: 20,
            ..RunConfig::default()
        };
        (Experiment::from_events(&synth.events, &cfg, false).unwrap(), cfg)
    }

    #[test]
    fn every_variant_reports() {
        let (exp, cfg) = tiny();
        let runs = run_variants(&Variant::ALL, &exp, &cfg).unwrap();
        let expected = exp.data.count(|s| &s.test);
        for (run, v) in runs.iter().zip(Variant::ALL) {
            assert_eq!(run.variant, v);
            assert_eq!(run.report.variant, v.name());
            assert_eq!(run.predictions.len(), expected);
            assert_eq!(run.report.cumulative.n_events, expected);
            assert_eq!(run.config.variant, v);
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let (exp, cfg) = tiny();
        let par = run_variants(&[Variant::NoTIF, Variant::Full], &exp, &cfg).unwrap();
        let seq = run_ablation(Variant::Full, &exp, &cfg).unwrap();
        assert_eq!(par[1].trained, seq.trained);
        assert_eq!(par[1].report, seq.report);
    }
}
