//! Central finite differences against the analytic gradients of a tiny
//! random model, plus the same check with one gradient entry corrupted.

use crossrec::params::Variant;
use crossrec::train::gradcheck::{check_gradients, mutation_check, TinyConfig, TinyProblem};

fn main() -> crossrec::Result<()> {
    for variant in Variant::ALL {
        let p = TinyProblem::random(
            TinyConfig {
                variant,
                ..TinyConfig::default()
            },
            1,
        );
        let r = check_gradients(&p, 200, 1e-5, 0)?;
        let bad = mutation_check(&p, 200, 1e-5, 0)?;
        println!(
            "{variant:>5}: {} parameters, max relative error {:.2e}, corrupted {:.2e}",
            r.checked, r.max_rel_error, bad.max_rel_error
        );
    }
    Ok(())
}
