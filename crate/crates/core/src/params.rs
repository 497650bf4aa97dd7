//! Flat storage for every learnable tensor, with named row-major views.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};

/// Model variants: the full model and its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Full,
    /// No pairwise interactions: the LSTM input pools first-order columns only.
    NoHO,
    /// No history attention.
    NoAt,
    /// Plain input and forget gates (no elapsed-time scaling).
    NoTIF,
    /// Standard LSTM fed the raw topical context.
    CLSTM,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoHO,
        Variant::NoAt,
        Variant::NoTIF,
        Variant::CLSTM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::NoHO => "NoHO",
            Variant::NoAt => "NoAt",
            Variant::NoTIF => "NoTIF",
            Variant::CLSTM => "CLSTM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{s}`")))
    }

    /// Embedding + interaction layers feed the LSTM (everything but CLSTM).
    pub fn interaction_input(self) -> bool {
        self != Variant::CLSTM
    }

    pub fn higher_order(self) -> bool {
        matches!(self, Variant::Full | Variant::NoAt | Variant::NoTIF)
    }

    pub fn attention(self) -> bool {
        matches!(self, Variant::Full | Variant::NoHO | Variant::NoTIF)
    }

    pub fn time_gates(self) -> bool {
        matches!(self, Variant::Full | Variant::NoHO | Variant::NoAt)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
    AttnInput,
    AttnCandidate,
}

impl Gate {
    pub const ALL: [Gate; 6] = [
        Gate::Input,
        Gate::Forget,
        Gate::Output,
        Gate::Candidate,
        Gate::AttnInput,
        Gate::AttnCandidate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
            Gate::AttnInput => "attn_input",
            Gate::AttnCandidate => "attn_candidate",
        }
    }

    pub fn is_attention(self) -> bool {
        matches!(self, Gate::AttnInput | Gate::AttnCandidate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    TopicA,
    TopicB,
    User,
    W(Gate),
    U(Gate),
    B(Gate),
    HeadW,
    HeadB,
}

impl Tensor {
    pub const COUNT: usize = 3 + 3 * 6 + 2;

    pub fn all() -> impl Iterator<Item = Tensor> {
        [Tensor::TopicA, Tensor::TopicB, Tensor::User]
            .into_iter()
            .chain(
                Gate::ALL
                    .into_iter()
                    .flat_map(|g| [Tensor::W(g), Tensor::U(g), Tensor::B(g)]),
            )
            .chain([Tensor::HeadW, Tensor::HeadB])
    }

    fn slot(self) -> usize {
        match self {
            Tensor::TopicA => 0,
            Tensor::TopicB => 1,
            Tensor::User => 2,
            Tensor::W(g) => 3 + 3 * g.index(),
            Tensor::U(g) => 4 + 3 * g.index(),
            Tensor::B(g) => 5 + 3 * g.index(),
            Tensor::HeadW => 21,
            Tensor::HeadB => 22,
        }
    }

    pub fn name(self) -> String {
        match self {
            Tensor::TopicA => "topic_a".into(),
            Tensor::TopicB => "topic_b".into(),
            Tensor::User => "user".into(),
            Tensor::W(g) => format!("w_{}", g.name()),
            Tensor::U(g) => format!("u_{}", g.name()),
            Tensor::B(g) => format!("b_{}", g.name()),
            Tensor::HeadW => "head_w".into(),
            Tensor::HeadB => "head_b".into(),
        }
    }
}

/// Sizes of every tensor in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub num_topics: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub num_items: usize,
    pub num_users: usize,
    /// Width of the LSTM input: `embed_dim`, or `2 * num_topics` when the raw
    /// context is fed directly.
    pub input_dim: usize,
}

impl ModelShape {
    pub fn new(
        variant: Variant,
        num_topics: usize,
        embed_dim: usize,
        hidden: usize,
        num_items: usize,
        num_users: usize,
    ) -> Self {
        let input_dim = if variant.interaction_input() {
            embed_dim
        } else {
            2 * num_topics
        };
        ModelShape {
            num_topics,
            embed_dim,
            hidden,
            num_items,
            num_users,
            input_dim,
        }
    }

    pub fn dims(&self, t: Tensor) -> (usize, usize) {
        match t {
            Tensor::TopicA | Tensor::TopicB => (self.num_topics, self.embed_dim),
            Tensor::User => (self.num_users, self.embed_dim),
            Tensor::W(_) => (self.hidden, self.input_dim),
            Tensor::U(_) => (self.hidden, self.hidden),
            Tensor::B(_) => (self.hidden, 1),
            Tensor::HeadW => (self.num_items, self.hidden),
            Tensor::HeadB => (self.num_items, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("num_topics", self.num_topics),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("num_items", self.num_items),
            ("num_users", self.num_users),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub tensor: Tensor,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Every learnable scalar of the model in one flat vector; each scalar has a
/// stable global index. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    shape: ModelShape,
    specs: Vec<TensorSpec>,
    data: Vec<f64>,
}

impl ParameterSet {
    pub fn zeros(shape: ModelShape) -> Self {
        let mut specs = Vec::with_capacity(Tensor::COUNT);
        let mut offset = 0;
        for t in Tensor::all() {
            debug_assert_eq!(t.slot(), specs.len());
            let (rows, cols) = shape.dims(t);
            specs.push(TensorSpec {
                tensor: t,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        }
        ParameterSet {
            shape,
            specs,
            data: vec![0.0; offset],
        }
    }

    /// Random initialization: embeddings uniform in `±1/√k`, recurrent and
    /// head weights uniform in `±1/√h`, biases zero except the forget bias
    /// at +1.
    pub fn init<R: Rng>(shape: ModelShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let emb = 1.0 / (shape.embed_dim as f64).sqrt();
        let rec = 1.0 / (shape.hidden as f64).sqrt();
        for t in Tensor::all() {
            let range = p.spec(t).range();
            let scale = match t {
                Tensor::TopicA | Tensor::TopicB | Tensor::User => emb,
                Tensor::W(_) | Tensor::U(_) | Tensor::HeadW => rec,
                Tensor::B(_) | Tensor::HeadB => 0.0,
            };
            for v in &mut p.data[range] {
                *v = if scale > 0.0 {
                    rng.random_range(-scale..scale)
                } else {
                    0.0
                };
            }
        }
        p.tensor_mut(Tensor::B(Gate::Forget)).fill(1.0);
        p
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            shape: self.shape,
            specs: self.specs.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    /// Rebuilds a parameter set from its flat view.
    pub fn unflatten(shape: ModelShape, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(shape);
        if data.len() != p.data.len() {
            return Err(Error::DimensionMismatch {
                expected: p.data.len(),
                actual: data.len(),
            });
        }
        p.data = data;
        Ok(p)
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn spec(&self, t: Tensor) -> &TensorSpec {
        &self.specs[t.slot()]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flatten(&self) -> &[f64] {
        &self.data
    }

    pub fn flatten_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tensor(&self, t: Tensor) -> &[f64] {
        &self.data[self.spec(t).range()]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        let r = self.spec(t).range();
        &mut self.data[r]
    }

    /// Global index range of one row of a tensor.
    pub fn row_range(&self, t: Tensor, row: usize) -> Range<usize> {
        let s = self.spec(t);
        debug_assert!(row < s.rows);
        let start = s.offset + row * s.cols;
        start..start + s.cols
    }

    pub fn row(&self, t: Tensor, row: usize) -> &[f64] {
        &self.data[self.row_range(t, row)]
    }

    pub fn row_mut(&mut self, t: Tensor, row: usize) -> &mut [f64] {
        let r = self.row_range(t, row);
        &mut self.data[r]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales in place so the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            self.data.iter_mut().for_each(|v| *v *= s);
        }
        norm
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape() -> ModelShape {
        ModelShape::new(Variant::Full, 3, 2, 4, 5, 2)
    }

    #[test]
    fn layout_is_contiguous() {
        let p = ParameterSet::zeros(shape());
        let mut expected = 0;
        for s in p.specs() {
            assert_eq!(s.offset, expected);
            expected += s.len();
        }
        assert_eq!(expected, p.len());
        // 2·3·2 topic + 2·2 user + 6·(4·2 + 4·4 + 4) gates + 5·4 + 5 head
        assert_eq!(p.len(), 12 + 4 + 6 * 28 + 25);
    }

    #[test]
    fn clstm_gates_take_raw_context() {
        let s = ModelShape::new(Variant::CLSTM, 3, 2, 4, 5, 2);
        assert_eq!(s.input_dim, 6);
        assert_eq!(s.dims(Tensor::W(Gate::Output)), (4, 6));
    }

    #[test]
    fn init_ranges_and_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ParameterSet::init(shape(), &mut rng);
        assert!(p.tensor(Tensor::B(Gate::Forget)).iter().all(|&b| b == 1.0));
        assert!(p.tensor(Tensor::B(Gate::Input)).iter().all(|&b| b == 0.0));
        let bound = 1.0 / 2f64.sqrt();
        assert!(p.tensor(Tensor::U(Gate::Candidate)).iter().all(|v| v.abs() <= 0.5));
        assert!(p.tensor(Tensor::User).iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn flatten_perturb_unflatten_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ParameterSet::init(shape(), &mut rng);
        let mut flat = p.flatten().to_vec();
        flat[17] += 0.25;
        let q = ParameterSet::unflatten(*p.shape(), flat.clone()).unwrap();
        assert_eq!(q.flatten(), &flat[..]);
        flat[17] -= 0.25;
        let r = ParameterSet::unflatten(*p.shape(), flat).unwrap();
        assert_eq!(r, p);
        assert!(ParameterSet::unflatten(*p.shape(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut g = ParameterSet::zeros(shape());
        g.tensor_mut(Tensor::HeadB).fill(10.0);
        let before = g.clip_global_norm(5.0);
        assert!((before - 10.0 * 5f64.sqrt()).abs() < 1e-12);
        assert!((g.l2_norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn variant_flags() {
        assert!(Variant::Full.higher_order() && Variant::Full.attention() && Variant::Full.time_gates());
        assert!(!Variant::NoHO.higher_order());
        assert!(!Variant::NoAt.attention());
        assert!(!Variant::NoTIF.time_gates());
        let c = Variant::CLSTM;
        assert!(!c.interaction_input() && !c.attention() && !c.time_gates() && !c.higher_order());
        assert_eq!(Variant::parse("clstm").unwrap(), Variant::CLSTM);
    }
}
