//! Generates a planted synthetic log, filters sparse users and items, and
//! splits every user's history chronologically.

use crossrec::data::{chronological_split, filter_sparse, Part, SparsityThresholds, SplitRatios};
use crossrec::eval::{generate_synthetic, SynthConfig};

fn main() -> crossrec::Result<()> {
    let synth = generate_synthetic(&SynthConfig {
        drift_at: vec![0.5],
        ..SynthConfig::default()
    })?;
    println!("{} events, drift at {:?}", synth.events.len(), synth.drift_times);
    for e in synth.events.iter().take(4) {
        println!("  {}", e.to_line());
    }

    let kept = filter_sparse(&synth.events, SparsityThresholds::default());
    let split = chronological_split(&kept, SplitRatios::default())?;
    println!(
        "kept {} events, {} users, {} items",
        kept.len(),
        split.users().count(),
        split.catalog.len()
    );
    let user = split.users().next().expect("at least one user").to_string();
    for part in [Part::Train, Part::Validation, Part::Test] {
        println!("  {user} {part:?}: {} target events", split.target_count(part, &user));
    }
    Ok(())
}
