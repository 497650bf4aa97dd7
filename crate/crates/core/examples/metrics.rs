//! Ranking metrics on a hand-made list, and the TimePop baseline.

use crossrec::eval::{diversity, hit_ratio, ndcg, novelty, TimePop};

fn main() -> crossrec::Result<()> {
    let list = [4, 1, 7, 2];
    println!("HR {:.3}", hit_ratio(&list, &[1, 9])?);
    println!("NDCG at rank 2 {:.4}", ndcg(&list, &[1])?);
    println!("NDCG perfect {:.4}", ndcg(&list, &[4])?);

    let features: Vec<Vec<f64>> = (0..8).map(|i| vec![(i % 2) as f64, (i % 3) as f64, 1.0]).collect();
    println!("diversity {:.4}", diversity(&list, &features)?);
    let popularity = [5, 9, 1, 0, 30, 2, 2, 4];
    println!("novelty {:.4} bits", novelty(&list, &popularity));

    let day = 86_400;
    let mut tp = TimePop::new(8);
    for (t, item) in [(10, 3), (20, 3), (30, 5), (day + 5, 1), (day + 6, 1), (day + 7, 1)] {
        tp.observe(t, item);
    }
    println!("day 1 list {:?}", tp.recommend(day + 100, 3));
    println!("day 2 list {:?}", tp.recommend(2 * day + 100, 3));
    Ok(())
}
