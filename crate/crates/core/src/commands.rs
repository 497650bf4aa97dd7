//! The command-line workflows. Each command reads its inputs, writes its
//! outputs plus a `config.txt` echo into the configured output directory.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use crate::config::RunConfig;
use crate::data::{chronological_split, filter_sparse, parse_event_log, write_event_log, DatasetSplit, StreamRange};
use crate::error::{Error, Result};
use crate::eval::ablation::{fit_topics, run_variants, Experiment};
use crate::eval::report::{long_csv, merge_reports, parse_report_csv, report_csv, summarize};
use crate::eval::synthetic::{generate_synthetic, SynthConfig};
use crate::eval::MetricReport;
use crate::online::predictions_csv;
use crate::params::Variant;
use crate::pipeline::ContextSource;
use crate::topics::{load_precomputed, write_contexts, TopicModel};
use crate::train::gradcheck::{check_gradients, mutation_check, TinyConfig, TinyProblem};
use crate::train::Checkpoint;

pub const ECHO_FILE: &str = "config.txt";

/// Where step contexts come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TopicsInput {
    Model(PathBuf),
    Table(PathBuf),
}

impl TopicsInput {
    pub fn load(&self) -> Result<ContextSource> {
        match self {
            TopicsInput::Model(p) => Ok(ContextSource::Model(TopicModel::load(p)?)),
            TopicsInput::Table(p) => Ok(ContextSource::Table(load_precomputed(p)?)),
        }
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Creates the output directory and writes the configuration echo.
pub fn start(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.write_echo(out.join(ECHO_FILE))?;
    Ok(out)
}

pub fn synth(cfg: &RunConfig, synth: &SynthConfig) -> Result<PathBuf> {
    let out = start(cfg)?;
    let data = generate_synthetic(synth)?;
    let path = out.join("events.tsv");
    write_event_log(&path, &data.events)?;
    let drift: Vec<String> = data.drift_times.iter().map(i64::to_string).collect();
    write(&out.join("drift_times.txt"), drift.join("\n") + "\n")?;
    info!("wrote {} events to {}", data.events.len(), path.display());
    Ok(path)
}

pub fn prepare(cfg: &RunConfig, events: &Path, filter: bool) -> Result<DatasetSplit> {
    let out = start(cfg)?;
    let mut events = parse_event_log(events)?;
    let n = events.len();
    if filter {
        events = filter_sparse(&events, cfg.thresholds());
    }
    let split = chronological_split(&events, cfg.split_ratios())?;
    split.write(&out)?;
    info!(
        "kept {} of {n} events, {} users, {} items",
        events.len(),
        split.users().count(),
        split.catalog.len()
    );
    Ok(split)
}

/// Fits the topic model on the training split, or validates and copies a
/// precomputed context table.
pub fn topics(cfg: &RunConfig, import: Option<&Path>) -> Result<PathBuf> {
    let out = start(cfg)?;
    let split = DatasetSplit::read(&cfg.data_dir)?;
    match import {
        Some(path) => {
            let table = load_precomputed(path)?;
            let exp = Experiment::new(split, ContextSource::Table(table.clone()))?;
            if exp.data.num_topics != cfg.topics {
                return Err(Error::DimensionMismatch {
                    expected: cfg.topics,
                    actual: exp.data.num_topics,
                });
            }
            let dest = out.join("contexts.tsv");
            write_contexts(&dest, table.values().flatten())?;
            Ok(dest)
        }
        None => {
            let model = fit_topics(&split, cfg)?;
            let dest = out.join("topics.model");
            model.save(&dest)?;
            Ok(dest)
        }
    }
}

fn experiment(cfg: &RunConfig, topics: Option<&TopicsInput>) -> Result<Experiment> {
    let split = DatasetSplit::read(&cfg.data_dir)?;
    let context = match topics {
        Some(t) => t.load()?,
        None => ContextSource::Model(fit_topics(&split, cfg)?),
    };
    Experiment::new(split, context)
}

pub fn train(cfg: &RunConfig, topics: &TopicsInput) -> Result<Checkpoint> {
    let out = start(cfg)?;
    let exp = experiment(cfg, Some(topics))?;
    let (ckpt, log) = exp.train(cfg, cfg.variant)?;
    ckpt.save(out.join("model.ckpt"))?;
    log.write_csv(out.join("training.csv"))?;
    Ok(ckpt)
}

fn write_report(dir: &Path, report: &MetricReport, events_csv: &str) -> Result<()> {
    write(&dir.join("events.csv"), events_csv)?;
    write(&dir.join("report.csv"), report_csv(std::slice::from_ref(report)))?;
    write(&dir.join("long.csv"), long_csv(std::slice::from_ref(report), 1))
}

/// Online predict-then-update pass. The input checkpoint is never modified;
/// the updated model goes to `model.ckpt` in the output directory.
pub fn stream(
    cfg: &RunConfig,
    checkpoint: &Path,
    topics: &TopicsInput,
    range: StreamRange,
    snapshot: Option<&Path>,
) -> Result<MetricReport> {
    let out = start(cfg)?;
    let exp = experiment(cfg, Some(topics))?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let variant = ckpt.variant;
    let (session, predictions) = exp.stream(ckpt, cfg.policy(), range)?;
    let events = predictions.iter().map(|p| p.metrics.clone()).collect();
    let report = MetricReport::from_stream(variant.name(), cfg.seed, cfg.top_k, cfg.window, events);
    write_report(&out, &report, &predictions_csv(&predictions))?;
    session.checkpoint().save(out.join("model.ckpt"))?;
    if let Some(path) = snapshot {
        session.snapshot(path)?;
    }
    info!(
        "{} events: HR@{} {:.4} NDCG {:.4}",
        report.cumulative.n_events, cfg.top_k, report.cumulative.hr, report.cumulative.ndcg
    );
    Ok(report)
}

/// Trains and streams every variant on one split.
pub fn ablate(cfg: &RunConfig, topics: Option<&TopicsInput>, variants: &[Variant]) -> Result<Vec<MetricReport>> {
    let out = start(cfg)?;
    let exp = experiment(cfg, topics)?;
    let runs = run_variants(variants, &exp, cfg)?;
    let mut reports = Vec::with_capacity(runs.len());
    for run in runs {
        let dir = out.join(run.variant.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        run.config.write_echo(dir.join(ECHO_FILE))?;
        run.trained.save(dir.join("model.ckpt"))?;
        run.log.write_csv(dir.join("training.csv"))?;
        write_report(&dir, &run.report, &predictions_csv(&run.predictions))?;
        reports.push(run.report);
    }
    write(&out.join("report.csv"), report_csv(&reports))?;
    write(&out.join("long.csv"), long_csv(&reports, 1))?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSummary {
    pub models: usize,
    pub max_rel_error: f64,
    /// Smallest error seen with one gradient entry doubled.
    pub min_mutation_error: f64,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= 1e-4 && self.min_mutation_error > 1e-2
    }
}

/// Finite-difference checks of `models` random tiny models per variant.
pub fn gradcheck(cfg: &RunConfig, variants: &[Variant], models: usize, samples: usize) -> Result<GradCheckSummary> {
    let out = start(cfg)?;
    let mut summary = GradCheckSummary {
        models: 0,
        max_rel_error: 0.0,
        min_mutation_error: f64::INFINITY,
    };
    let mut lines = vec!["variant,seed,max_rel_error,mutation_error".to_string()];
    for &variant in variants {
        for m in 0..models as u64 {
            let seed = cfg.seed.wrapping_add(m);
            let tiny = TinyConfig {
                variant,
                num_topics: cfg.topics,
                embed_dim: cfg.embed_dim,
                hidden: cfg.hidden,
                ..TinyConfig::default()
            };
            let p = TinyProblem::random(tiny, seed);
            let r = check_gradients(&p, samples, 1e-5, seed)?;
            let bad = mutation_check(&p, samples, 1e-5, seed)?;
            lines.push(format!("{variant},{seed},{},{}", r.max_rel_error, bad.max_rel_error));
            summary.models += 1;
            summary.max_rel_error = summary.max_rel_error.max(r.max_rel_error);
            summary.min_mutation_error = summary.min_mutation_error.min(bad.max_rel_error);
        }
    }
    write(&out.join("gradcheck.csv"), lines.join("\n") + "\n")?;
    Ok(summary)
}

/// Concatenates report CSVs and summarizes them across runs.
pub fn report(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<PathBuf> {
    let out = start(cfg)?;
    let texts = inputs
        .iter()
        .map(|p| fs::read_to_string(p).map_err(|e| Error::io(p, e)))
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_reports(&texts)?;
    write(&out.join("summary.csv"), summarize(&parse_report_csv(&merged)?))?;
    let dest = out.join("report.csv");
    write(&dest, merged)?;
    Ok(dest)
}
