//! Fits the topic model on the training posts and builds per-step contexts.

use crossrec::data::{chronological_split, SplitRatios};
use crossrec::eval::{generate_synthetic, SynthConfig};
use crossrec::topics::{fit_lda, user_contexts, LdaParams};

fn main() -> crossrec::Result<()> {
    let synth = generate_synthetic(&SynthConfig::default())?;
    let split = chronological_split(&synth.events, SplitRatios::default())?;
    let corpus: Vec<Vec<&str>> = split
        .train
        .values()
        .flatten()
        .filter_map(|e| e.tokens().map(|t| t.iter().map(String::as_str).collect()))
        .collect();
    let model = fit_lda(
        &corpus,
        &LdaParams {
            num_topics: 5,
            ..LdaParams::default()
        },
    )?;

    for z in 0..model.num_topics() {
        let phi = model.topic(z);
        let mut words: Vec<usize> = (0..phi.len()).collect();
        words.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]));
        let top: Vec<&str> = words[..5].iter().map(|&w| model.vocabulary().id(w)).collect();
        println!("topic {z}: {}", top.join(" "));
    }

    let doc = ["t2w01", "t2w04", "t2w07", "t0w03"];
    println!("infer {doc:?} -> {:.3?}", model.infer_topics(&doc));

    let user = split.users().next().expect("user").to_string();
    let events = split.user_events(&user);
    for c in user_contexts(&events, &model).iter().take(3) {
        println!(
            "{} dt {:>8} x_a {:.2?} x_b {:.2?}",
            c.step_time,
            c.delta_t,
            c.x_a(),
            c.x_b()
        );
    }
    Ok(())
}
