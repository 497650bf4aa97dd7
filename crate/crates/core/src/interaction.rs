//! Embedding and higher-order interaction layers.
//!
//! Each non-zero topic weight in the context scales that topic's embedding;
//! together with the user's embedding these form the first-order columns.
//! Second-order columns are the element-wise products of every pair of
//! first-order columns, and the LSTM input is the sum over all columns.

use crate::error::{Error, Result};
use crate::params::{ParameterSet, Tensor};

/// Borrowed view of the embedding tensors.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingTable<'a> {
    pub topic_a: &'a [f64],
    pub topic_b: &'a [f64],
    pub users: &'a [f64],
    pub dim: usize,
}

impl<'a> EmbeddingTable<'a> {
    pub fn from_params(p: &'a ParameterSet) -> Self {
        EmbeddingTable {
            topic_a: p.tensor(Tensor::TopicA),
            topic_b: p.tensor(Tensor::TopicB),
            users: p.tensor(Tensor::User),
            dim: p.shape().embed_dim,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.topic_a.len() / self.dim
    }

    pub fn num_users(&self) -> usize {
        self.users.len() / self.dim
    }

    fn row(table: &[f64], dim: usize, i: usize) -> &[f64] {
        &table[i * dim..(i + 1) * dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnSource {
    TopicA(usize),
    TopicB(usize),
    User(usize),
}

/// One first-order column: `weight · embedding`.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub source: ColumnSource,
    pub weight: f64,
    pub values: Vec<f64>,
}

/// First-order columns for a context `x = x_a | x_b` and a user. Zero topic
/// weights contribute no column; the user column is always last.
pub fn embed(x: &[f64], user: usize, table: &EmbeddingTable) -> Result<Vec<Column>> {
    let k = table.dim;
    let topics = table.num_topics();
    if x.len() != 2 * topics {
        return Err(Error::DimensionMismatch {
            expected: 2 * topics,
            actual: x.len(),
        });
    }
    if user >= table.num_users() {
        return Err(Error::UnknownUser(format!("#{user}")));
    }
    let mut columns = Vec::new();
    for (c, &w) in x.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (source, emb) = if c < topics {
            (ColumnSource::TopicA(c), EmbeddingTable::row(table.topic_a, k, c))
        } else {
            (
                ColumnSource::TopicB(c - topics),
                EmbeddingTable::row(table.topic_b, k, c - topics),
            )
        };
        columns.push(Column {
            source,
            weight: w,
            values: emb.iter().map(|e| w * e).collect(),
        });
    }
    columns.push(Column {
        source: ColumnSource::User(user),
        weight: 1.0,
        values: EmbeddingTable::row(table.users, k, user).to_vec(),
    });
    Ok(columns)
}

/// Explicit second-order columns `e_i ⊙ e_j` for `i < j`, in lexicographic
/// `(i, j)` order.
pub fn pairwise_products<C: AsRef<[f64]>>(columns: &[C]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(columns.len() * columns.len().saturating_sub(1) / 2);
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            let a = columns[i].as_ref();
            let b = columns[j].as_ref();
            out.push(a.iter().zip(b).map(|(x, y)| x * y).collect());
        }
    }
    out
}

/// Component-wise sum over all first- and second-order columns.
pub fn sum_pool<A: AsRef<[f64]>, B: AsRef<[f64]>>(first: &[A], second: &[B], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for col in first.iter().map(AsRef::as_ref).chain(second.iter().map(AsRef::as_ref)) {
        for (o, v) in out.iter_mut().zip(col) {
            *o += v;
        }
    }
    out
}

/// Sum of all pairwise products without materializing them:
/// `½((Σ e_j)² − Σ e_j²)` element-wise.
pub fn pairwise_pool<C: AsRef<[f64]>>(columns: &[C], dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for col in columns {
        for ((s, q), v) in sum.iter_mut().zip(sq.iter_mut()).zip(col.as_ref()) {
            *s += v;
            *q += v * v;
        }
    }
    sum.iter().zip(&sq).map(|(s, q)| 0.5 * (s * s - q)).collect()
}

/// Second-order term of a factorization machine, `Σ_{i<j} ⟨v_i, v_j⟩ x_i x_j`,
/// by explicit double loop over the non-zero features of a sparse `x`.
pub fn fm_pairwise_oracle(x: &[(usize, f64)], factors: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            let (i, xi) = x[a];
            let (j, xj) = x[b];
            let dot: f64 = factors[i].iter().zip(&factors[j]).map(|(p, q)| p * q).sum();
            total += dot * xi * xj;
        }
    }
    total
}

/// Pooled LSTM input for one step, with the columns retained for the
/// backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionInput {
    pub columns: Vec<Column>,
    /// Sum of the first-order columns.
    pub first_sum: Vec<f64>,
    pub pooled: Vec<f64>,
    pub higher_order: bool,
}

impl InteractionInput {
    pub fn build(x: &[f64], user: usize, table: &EmbeddingTable, higher_order: bool) -> Result<Self> {
        let columns = embed(x, user, table)?;
        let values: Vec<&[f64]> = columns.iter().map(|c| c.values.as_slice()).collect();
        let first_sum = sum_pool::<&[f64], &[f64]>(&values, &[], table.dim);
        let pooled = if higher_order {
            let pairs = pairwise_pool(&values, table.dim);
            first_sum.iter().zip(&pairs).map(|(a, b)| a + b).collect()
        } else {
            first_sum.clone()
        };
        Ok(InteractionInput {
            columns,
            first_sum,
            pooled,
            higher_order,
        })
    }

    /// Number of active source-A and source-B topic columns.
    pub fn active_counts(&self) -> (usize, usize) {
        let n = self
            .columns
            .iter()
            .filter(|c| matches!(c.source, ColumnSource::TopicA(_)))
            .count();
        let m = self
            .columns
            .iter()
            .filter(|c| matches!(c.source, ColumnSource::TopicB(_)))
            .count();
        (n, m)
    }

    /// The explicit second-order block (empty when interactions are off).
    pub fn second_order(&self) -> Vec<Vec<f64>> {
        if !self.higher_order {
            return Vec::new();
        }
        let values: Vec<&[f64]> = self.columns.iter().map(|c| c.values.as_slice()).collect();
        pairwise_products(&values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table<'a>(a: &'a [f64], b: &'a [f64], u: &'a [f64], dim: usize) -> EmbeddingTable<'a> {
        EmbeddingTable {
            topic_a: a,
            topic_b: b,
            users: u,
            dim,
        }
    }

    #[test]
    fn zero_context_only_user_column() {
        let (a, b, u) = ([0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.7, 0.8], [9.0, 8.0]);
        let cols = embed(&[0.0; 4], 0, &table(&a, &b, &u, 2)).unwrap();
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].source, ColumnSource::User(0));
        assert_eq!(cols[0].values, vec![9.0, 8.0]);
    }

    #[test]
    fn topic_column_is_scaled() {
        let (a, b, u) = ([0.1, 0.2], [0.0, 0.0], [1.0, 1.0]);
        let cols = embed(&[2.0, 0.0], 0, &table(&a, &b, &u, 2)).unwrap();
        assert_eq!(cols[0].source, ColumnSource::TopicA(0));
        assert!((cols[0].values[0] - 0.2).abs() < 1e-15 && (cols[0].values[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn unknown_user_is_error() {
        let (a, b, u) = ([0.1, 0.2], [0.0, 0.0], [1.0, 1.0]);
        assert!(matches!(
            embed(&[1.0, 0.0], 3, &table(&a, &b, &u, 2)),
            Err(Error::UnknownUser(_))
        ));
    }

    #[test]
    fn pair_counts_and_products() {
        assert_eq!(
            pairwise_products(&[vec![1.0, 2.0], vec![3.0, 4.0]]),
            vec![vec![3.0, 8.0]]
        );
        let three = [vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(pairwise_products(&three), vec![vec![2.0], vec![3.0], vec![6.0]]);
        assert!(pairwise_products(&[vec![1.0]]).is_empty());
    }

    #[test]
    fn pooling_basics() {
        let first = [vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(sum_pool(&first, &[vec![0.0, 0.0]], 2), vec![1.0, 1.0]);
        let none: [Vec<f64>; 0] = [];
        assert_eq!(sum_pool(&none, &none, 3), vec![0.0; 3]);
    }

    #[test]
    fn fm_oracle_cases() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(fm_pairwise_oracle(&[(0, 3.0)], &v), 0.0);
        assert_eq!(fm_pairwise_oracle(&[(0, 1.0), (1, 1.0)], &v), 0.0);
        let w = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        assert_eq!(fm_pairwise_oracle(&[(0, 2.0), (1, 0.5)], &w), 5.0);
    }

    fn columns_strategy() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
        (1usize..8).prop_flat_map(|dim| {
            (
                Just(dim),
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), 0..12),
            )
        })
    }

    proptest! {
        #[test]
        fn fast_pool_matches_explicit_pairs((dim, cols) in columns_strategy()) {
            let explicit = pairwise_products(&cols);
            prop_assert_eq!(explicit.len(), cols.len() * cols.len().saturating_sub(1) / 2);
            let none: [Vec<f64>; 0] = [];
            let slow = sum_pool(&none, &explicit, dim);
            let fast = pairwise_pool(&cols, dim);
            for (s, f) in slow.iter().zip(&fast) {
                prop_assert!((s - f).abs() <= 1e-10 * (1.0 + s.abs()));
            }
        }

        #[test]
        fn scaling_a_weight_is_bilinear(lambda in -3.0f64..3.0, w in 0.1f64..2.0) {
            let a = [0.3, -0.2, 0.5, 0.1];
            let b = [0.7, 0.4, -0.6, 0.2];
            let u = [0.25, -0.75];
            let t = table(&a, &b, &u, 2);
            let base = InteractionInput::build(&[w, 0.0, 0.4, 0.0], 0, &t, true).unwrap();
            let scaled = InteractionInput::build(&[lambda * w, 0.0, 0.4, 0.0], 0, &t, true).unwrap();
            if lambda != 0.0 {
                for (x, y) in base.columns[0].values.iter().zip(&scaled.columns[0].values) {
                    prop_assert!((lambda * x - y).abs() < 1e-12);
                }
                // pairs (0,1) and (0,2) contain the scaled column, (1,2) does not
                let (p, q) = (base.second_order(), scaled.second_order());
                prop_assert_eq!(p.len(), 3);
                for e in 0..2 {
                    prop_assert!((lambda * p[0][e] - q[0][e]).abs() < 1e-12);
                    prop_assert!((lambda * p[1][e] - q[1][e]).abs() < 1e-12);
                    prop_assert!((p[2][e] - q[2][e]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn build_counts_columns() {
        let a = [0.1; 6];
        let b = [0.2; 6];
        let u = [0.3; 4];
        let t = table(&a, &b, &u, 2);
        let inp = InteractionInput::build(&[1.0, 0.0, 2.0, 0.5, 0.5, 0.0], 1, &t, true).unwrap();
        let (n, m) = inp.active_counts();
        assert_eq!((n, m), (2, 2));
        assert_eq!(inp.second_order().len(), (n + m + 1) * (n + m) / 2);
        let no_ho = InteractionInput::build(&[1.0, 0.0, 2.0, 0.5, 0.5, 0.0], 1, &t, false).unwrap();
        assert_eq!(no_ho.pooled, no_ho.first_sum);
        assert!(no_ho.second_order().is_empty());
    }
}
