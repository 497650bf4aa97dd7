//! Offline training on a planted synthetic stream at the scaled-down
//! configuration, compared against the TimePop baseline.

use crossrec::config::RunConfig;
use crossrec::eval::metrics::user_average;
use crossrec::eval::timepop::{timepop_events, HeldOut};
use crossrec::eval::{generate_synthetic, Experiment, SynthConfig};
use crossrec::params::Variant;
use crossrec::train::trainer::evaluate_validation;

fn main() -> crossrec::Result<()> {
    let synth = generate_synthetic(&SynthConfig::default())?;
    let cfg = RunConfig::scaled_down();
    let exp = Experiment::from_events(&synth.events, &cfg, false)?;
    println!(
        "{} users, {} items, tau {:.0}s",
        exp.data.num_users(),
        exp.data.num_items(),
        exp.data.tau
    );

    let (checkpoint, log) = exp.train(&cfg, Variant::Full)?;
    print!("{}", log.to_csv());
    println!("best epoch {}", log.best_epoch);

    let options = exp.options(&cfg, Variant::Full);
    for k in [5, 10] {
        let model = evaluate_validation(&exp.data, &options, &checkpoint.params, k)?;
        let baseline = user_average(&timepop_events(&exp.data, HeldOut::Validation, k)?);
        println!("HR@{k}: model {:.4}, TimePop {:.4}", model.hr, baseline.hr);
    }
    Ok(())
}
