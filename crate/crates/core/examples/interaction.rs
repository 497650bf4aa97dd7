//! The interaction layer: first-order columns, explicit pairwise products,
//! and the pooled input computed without materializing the pairs.

use crossrec::interaction::{pairwise_pool, sum_pool, EmbeddingTable, InteractionInput};

fn main() -> crossrec::Result<()> {
    let k = 4;
    let topic_a: Vec<f64> = (0..3 * k).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
    let topic_b: Vec<f64> = (0..3 * k).map(|i| ((i * 5 % 13) as f64 - 6.0) / 10.0).collect();
    let users: Vec<f64> = (0..k).map(|i| 0.1 * (i as f64 + 1.0)).collect();
    let table = EmbeddingTable {
        topic_a: &topic_a,
        topic_b: &topic_b,
        users: &users,
        dim: k,
    };
    // two active source-A topics, one source-B topic
    let x = [0.7, 0.0, 1.3, 0.0, 0.4, 0.0];
    let input = InteractionInput::build(&x, 0, &table, true)?;
    let (n, m) = input.active_counts();
    println!("{n} + {m} topic columns plus the user column");

    let second = input.second_order();
    let explicit = sum_pool(std::slice::from_ref(&input.first_sum), &second, k);
    let values: Vec<&[f64]> = input.columns.iter().map(|c| c.values.as_slice()).collect();
    let fast = pairwise_pool(&values, k);
    println!("{} pairwise columns", second.len());
    println!("explicit pooled {:.6?}", explicit);
    println!("factorized      {:.6?}", input.pooled);
    println!("pairwise block  {fast:.6?}");
    Ok(())
}
