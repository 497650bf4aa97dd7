//! Predict-then-update over the test stream, with a snapshot taken halfway
//! and restored into a second session.

use crossrec::config::RunConfig;
use crossrec::data::{simulate_stream, StreamRange};
use crossrec::eval::{generate_synthetic, Experiment, MetricReport, SynthConfig};
use crossrec::online::OnlineSession;
use crossrec::params::Variant;

fn main() -> crossrec::Result<()> {
    let synth = generate_synthetic(&SynthConfig {
        drift_at: vec![0.5],
        ..SynthConfig::default()
    })?;
    let cfg = RunConfig {
        epochs: 3,
        ..RunConfig::scaled_down()
    };
    let exp = Experiment::from_events(&synth.events, &cfg, false)?;
    let (checkpoint, _) = exp.train(&cfg, Variant::Full)?;

    let events: Vec<_> = simulate_stream(&exp.split, StreamRange::Test).collect();
    let (first, rest) = events.split_at(events.len() / 2);
    let mut session = exp.session(checkpoint, cfg.policy(), StreamRange::Test)?;
    let mut predictions = session.run(first.iter().cloned())?;

    let snap = std::env::temp_dir().join(format!("crossrec-online-{}.snap", std::process::id()));
    session.snapshot(&snap)?;
    let mut restored = OnlineSession::restore(&snap)?;
    predictions.extend(restored.run(rest.iter().cloned())?);

    for p in predictions.iter().take(5) {
        println!(
            "{} {} rank {:>3} p(observed) {:.4} -> {:.4}",
            p.timestamp,
            p.user_id,
            p.rank,
            p.update.observed[0],
            p.update.observed.last().unwrap()
        );
    }
    let metrics = predictions.iter().map(|p| p.metrics.clone()).collect();
    let report = MetricReport::from_stream("Full", cfg.seed, cfg.top_k, cfg.window, metrics);
    println!(
        "{} events: HR@{} {:.4} NDCG {:.4}, after drift HR {:.4}",
        report.cumulative.n_events,
        cfg.top_k,
        report.cumulative.hr,
        report.cumulative.ndcg,
        report.since(synth.drift_times[0]).hr
    );
    std::fs::remove_file(&snap).ok();
    Ok(())
}
