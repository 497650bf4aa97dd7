//! Trains and streams all five variants on one synthetic split and prints
//! the per-window report.

use crossrec::config::RunConfig;
use crossrec::eval::{generate_synthetic, report_csv, run_variants, Experiment, SynthConfig};
use crossrec::params::Variant;

fn main() -> crossrec::Result<()> {
    let synth = generate_synthetic(&SynthConfig::default())?;
    let cfg = RunConfig {
        epochs: 4,
        ..RunConfig::scaled_down()
    };
    let exp = Experiment::from_events(&synth.events, &cfg, false)?;
    let runs = run_variants(&Variant::ALL, &exp, &cfg)?;
    let reports: Vec<_> = runs.into_iter().map(|r| r.report).collect();
    print!("{}", report_csv(&reports));
    Ok(())
}
