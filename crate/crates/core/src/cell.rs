//! The recurrent cell: history attention, attention gates, elapsed-time
//! scaled input/forget gates, the cell update and the item prediction head.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{cosine, matvec_acc, sigmoid, softmax};
use crate::params::{Gate, ParameterSet, Tensor, Variant};

/// Elapsed times below this many seconds are raised to it.
pub const MIN_DELTA_T: f64 = 1.0;

/// Which parts of the cell are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub attention: bool,
    pub time_gates: bool,
    /// Time constant in seconds that normalizes elapsed time.
    pub tau: f64,
    pub history_cap: Option<usize>,
}

impl CellOptions {
    pub fn for_variant(variant: Variant, tau: f64, history_cap: Option<usize>) -> Self {
        CellOptions {
            attention: variant.attention(),
            time_gates: variant.time_gates(),
            tau,
            history_cap,
        }
    }
}

/// Softmax over cosine similarities between the current context and each
/// stored context.
pub fn attention_scores<C: AsRef<[f64]>>(x: &[f64], history: &[C]) -> Vec<f64> {
    if history.is_empty() {
        return Vec::new();
    }
    let sims: Vec<f64> = history.iter().map(|c| cosine(x, c.as_ref())).collect();
    softmax(&sims)
}

/// `Σ α_j h_j`; the zero vector for an empty history.
pub fn attention_vector<H: AsRef<[f64]>>(alpha: &[f64], outputs: &[H], hidden: usize) -> Result<Vec<f64>> {
    if alpha.len() != outputs.len() {
        return Err(Error::DimensionMismatch {
            expected: outputs.len(),
            actual: alpha.len(),
        });
    }
    let mut h_a = vec![0.0; hidden];
    for (a, h) in alpha.iter().zip(outputs) {
        let h = h.as_ref();
        if h.len() != hidden {
            return Err(Error::DimensionMismatch {
                expected: hidden,
                actual: h.len(),
            });
        }
        for (o, v) in h_a.iter_mut().zip(h) {
            *o += a * v;
        }
    }
    Ok(h_a)
}

/// `W^g · input + U^g · recurrent + b^g`.
pub fn preactivation(params: &ParameterSet, gate: Gate, input: &[f64], recurrent: &[f64]) -> Vec<f64> {
    let mut z = params.tensor(Tensor::B(gate)).to_vec();
    matvec_acc(params.tensor(Tensor::W(gate)), input, &mut z);
    matvec_acc(params.tensor(Tensor::U(gate)), recurrent, &mut z);
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGates {
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub contribution: Vec<f64>,
}

pub fn attention_gates(input: &[f64], h_a: &[f64], params: &ParameterSet) -> AttentionGates {
    let gate: Vec<f64> = preactivation(params, Gate::AttnInput, input, h_a)
        .into_iter()
        .map(sigmoid)
        .collect();
    let candidate: Vec<f64> = preactivation(params, Gate::AttnCandidate, input, h_a)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let contribution = gate.iter().zip(&candidate).map(|(a, b)| a * b).collect();
    AttentionGates {
        input: gate,
        candidate,
        contribution,
    }
}

/// Input and forget scalings `(1 − e^{−d}, e^{−d})` with
/// `d = max(Δt, MIN_DELTA_T) / τ`. An infinite gap gives `(1, 0)`.
pub fn time_scales(delta_t: f64, tau: f64) -> (f64, f64) {
    let d = delta_t.max(MIN_DELTA_T) / tau;
    (-(-d).exp_m1(), (-d).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGates {
    /// Unscaled sigmoid activations.
    pub input_raw: Vec<f64>,
    pub forget_raw: Vec<f64>,
    pub input_scale: f64,
    pub forget_scale: f64,
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
}

pub fn time_gates(input: &[f64], h_prev: &[f64], scales: (f64, f64), params: &ParameterSet) -> TimeGates {
    let input_raw: Vec<f64> = preactivation(params, Gate::Input, input, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let forget_raw: Vec<f64> = preactivation(params, Gate::Forget, input, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let (si, sf) = scales;
    TimeGates {
        input: input_raw.iter().map(|g| si * g).collect(),
        forget: forget_raw.iter().map(|g| sf * g).collect(),
        input_raw,
        forget_raw,
        input_scale: si,
        forget_scale: sf,
    }
}

/// Per-user recurrent memory.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecurrentState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    /// `(context, output)` pairs of past steps, oldest first.
    pub history: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl UserRecurrentState {
    pub fn new(hidden: usize) -> Self {
        UserRecurrentState {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
            history: VecDeque::new(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.h.len()
    }

    /// Adopts the step's cell and output and records it for attention.
    pub fn commit(&mut self, x: &[f64], step: &CellTrace, opts: &CellOptions) {
        self.c.clone_from(&step.c);
        self.h.clone_from(&step.h);
        if opts.attention {
            self.history.push_back((x.to_vec(), step.h.clone()));
            if let Some(cap) = opts.history_cap {
                while self.history.len() > cap {
                    self.history.pop_front();
                }
            }
        }
    }
}

/// Everything the cell computed for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    pub alpha: Vec<f64>,
    pub h_a: Vec<f64>,
    /// `None` when attention is off or the history is empty.
    pub attention: Option<AttentionGates>,
    pub time: TimeGates,
    pub output_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One cell update from `state` given the pooled input, the raw context and
/// the elapsed time. The state itself is not modified.
pub fn cell_forward(
    state: &UserRecurrentState,
    input: &[f64],
    x: &[f64],
    delta_t: f64,
    params: &ParameterSet,
    opts: &CellOptions,
) -> CellTrace {
    let hidden = state.hidden();
    let (alpha, h_a, attention) = if opts.attention && !state.history.is_empty() {
        let contexts: Vec<&[f64]> = state.history.iter().map(|(c, _)| c.as_slice()).collect();
        let outputs: Vec<&[f64]> = state.history.iter().map(|(_, h)| h.as_slice()).collect();
        let alpha = attention_scores(x, &contexts);
        let h_a = attention_vector(&alpha, &outputs, hidden).expect("history is consistent");
        let gates = attention_gates(input, &h_a, params);
        (alpha, h_a, Some(gates))
    } else {
        (Vec::new(), vec![0.0; hidden], None)
    };
    let scales = if opts.time_gates {
        time_scales(delta_t, opts.tau)
    } else {
        (1.0, 1.0)
    };
    let time = time_gates(input, &state.h, scales, params);
    let output_gate: Vec<f64> = preactivation(params, Gate::Output, input, &state.h)
        .into_iter()
        .map(sigmoid)
        .collect();
    let candidate: Vec<f64> = preactivation(params, Gate::Candidate, input, &state.h)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let mut c: Vec<f64> = (0..hidden)
        .map(|j| time.forget[j] * state.c[j] + time.input[j] * candidate[j])
        .collect();
    if let Some(a) = &attention {
        for (cv, v) in c.iter_mut().zip(&a.contribution) {
            *cv += v;
        }
    }
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = output_gate.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
    CellTrace {
        alpha,
        h_a,
        attention,
        time,
        output_gate,
        candidate,
        c,
        tanh_c,
        h,
    }
}

/// Scores `r = tanh(W^r h + b^r)` and their softmax.
pub fn predict(h: &[f64], params: &ParameterSet) -> (Vec<f64>, Vec<f64>) {
    let mut r = params.tensor(Tensor::HeadB).to_vec();
    matvec_acc(params.tensor(Tensor::HeadW), h, &mut r);
    r.iter_mut().for_each(|v| *v = v.tanh());
    let y = softmax(&r);
    (r, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub trace: CellTrace,
    pub r: Vec<f64>,
    pub y_hat: Vec<f64>,
}

/// Cell update followed by an evaluation-mode prediction.
pub fn cell_step(
    state: &UserRecurrentState,
    input: &[f64],
    x: &[f64],
    delta_t: f64,
    params: &ParameterSet,
    opts: &CellOptions,
) -> StepOutput {
    let trace = cell_forward(state, input, x, delta_t, params, opts);
    let (r, y_hat) = predict(&trace.h, params);
    StepOutput { trace, r, y_hat }
}

/// Indices of the `k` largest scores, descending, ties by ascending index.
pub fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "top-{k} requested from {} items",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// 1-based rank of `item` under the `top_k` ordering.
pub fn rank_of(scores: &[f64], item: usize) -> usize {
    let s = scores[item];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < item))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelShape;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(hidden: usize, input: usize, items: usize) -> ModelShape {
        ModelShape {
            num_topics: 2,
            embed_dim: input,
            hidden,
            num_items: items,
            num_users: 1,
            input_dim: input,
        }
    }

    fn random_params(shape: ModelShape, seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterSet::init(shape, &mut rng);
        for v in p.flatten_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        p
    }

    #[test]
    fn attention_examples() {
        let a = attention_scores(&[1.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(a, vec![0.5, 0.5]);
        let a = attention_scores(&[1.0, 0.0], &[vec![0.0, 1.0], vec![2.0, 0.0]]);
        let e = 1f64.exp();
        assert!((a[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((a[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((a[0] - 0.2689).abs() < 1e-4);
        let a = attention_scores(&[0.0, 0.0], &[vec![0.3, 1.0], vec![2.0, 0.0], vec![1.0, 1.0]]);
        assert!(a.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(attention_scores::<Vec<f64>>(&[1.0], &[]).is_empty());
    }

    #[test]
    fn attention_vector_examples() {
        assert_eq!(
            attention_vector(&[1.0], &[vec![3.0, -1.0]], 2).unwrap(),
            vec![3.0, -1.0]
        );
        let hv = attention_vector(&[0.5, 0.5], &[vec![1.0, 0.0], vec![0.0, 1.0]], 2).unwrap();
        assert_eq!(hv, vec![0.5, 0.5]);
        assert_eq!(attention_vector::<Vec<f64>>(&[], &[], 3).unwrap(), vec![0.0; 3]);
        assert!(attention_vector(&[0.5, 0.5], &[vec![1.0, 0.0]], 2).is_err());
    }

    #[test]
    fn attention_gate_examples() {
        let p = ParameterSet::zeros(shape(2, 2, 2));
        let g = attention_gates(&[0.0, 0.0], &[0.0, 0.0], &p);
        assert_eq!(g.input, vec![0.5, 0.5]);
        assert_eq!(g.candidate, vec![0.0, 0.0]);
        assert_eq!(g.contribution, vec![0.0, 0.0]);

        let mut p = ParameterSet::zeros(shape(1, 1, 1));
        p.tensor_mut(Tensor::B(Gate::AttnInput))[0] = 3f64.ln();
        let g = attention_gates(&[0.7], &[-0.2], &p);
        assert!((g.input[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn time_scale_limits() {
        let tau = 86_400.0;
        let (si, sf) = time_scales(2f64.ln() * tau, tau);
        assert!((si - 0.5).abs() < 1e-15 && (sf - 0.5).abs() < 1e-15);
        let (si, sf) = time_scales(f64::INFINITY, tau);
        assert_eq!((si, sf), (1.0, 0.0));
        let (si, sf) = time_scales(0.0, tau);
        assert!((si - 1.0 / tau).abs() < 1e-9 && sf > 1.0 - 1e-4);
        let (_, sf) = time_scales(20.0 * tau, tau);
        assert!(sf < 1e-8);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = ParameterSet::zeros(shape(3, 2, 4));
        let opts = CellOptions {
            attention: true,
            time_gates: true,
            tau: 10.0,
            history_cap: None,
        };
        let state = UserRecurrentState::new(3);
        let out = cell_step(&state, &[0.4, -1.0], &[1.0, 0.0, 0.0, 0.0], 5.0, &p, &opts);
        assert_eq!(out.trace.h, vec![0.0; 3]);
        assert_eq!(out.trace.output_gate, vec![0.5; 3]);
        assert_eq!(out.y_hat, vec![0.25; 4]);
    }

    #[test]
    fn huge_gap_forgets_previous_cell() {
        let p = random_params(shape(3, 2, 2), 4);
        let opts = CellOptions {
            attention: false,
            time_gates: true,
            tau: 1.0,
            history_cap: None,
        };
        let mut a = UserRecurrentState::new(3);
        a.h = vec![0.1, 0.2, 0.3];
        let mut b = a.clone();
        a.c = vec![5.0, -3.0, 2.0];
        b.c = vec![0.0; 3];
        let ta = cell_forward(&a, &[0.3, 0.1], &[], 1e6, &p, &opts);
        let tb = cell_forward(&b, &[0.3, 0.1], &[], 1e6, &p, &opts);
        assert_eq!(ta.c, tb.c);
    }

    /// Hand trace of two identical steps with `d = ln 2`, `h = 2`.
    #[test]
    fn two_step_trace() {
        let p = random_params(shape(2, 2, 3), 9);
        let tau = 100.0;
        let opts = CellOptions {
            attention: false,
            time_gates: true,
            tau,
            history_cap: None,
        };
        let input = [0.5, -0.25];
        let dt = 2f64.ln() * tau;
        let mut state = UserRecurrentState::new(2);
        let first = cell_forward(&state, &input, &[], dt, &p, &opts);
        state.commit(&[], &first, &opts);
        let second = cell_forward(&state, &input, &[], dt, &p, &opts);
        let gate = |g: Gate, j: usize, h: &[f64]| {
            let w = p.row(Tensor::W(g), j);
            let u = p.row(Tensor::U(g), j);
            p.tensor(Tensor::B(g))[j] + w[0] * input[0] + w[1] * input[1] + u[0] * h[0] + u[1] * h[1]
        };
        for j in 0..2 {
            let hp = &first.h;
            let f = 0.5 * sigmoid(gate(Gate::Forget, j, hp));
            let i = 0.5 * sigmoid(gate(Gate::Input, j, hp));
            let c = gate(Gate::Candidate, j, hp).tanh();
            let expected = f * first.c[j] + i * c;
            assert!((second.c[j] - expected).abs() < 1e-15);
        }
    }

    /// Independent textbook LSTM step.
    fn plain_lstm(p: &ParameterSet, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let z = |g: Gate, j: usize| -> f64 {
            let w = p.row(Tensor::W(g), j);
            let u = p.row(Tensor::U(g), j);
            let mut s = p.tensor(Tensor::B(g))[j];
            for (a, b) in w.iter().zip(x) {
                s += a * b;
            }
            for (a, b) in u.iter().zip(h) {
                s += a * b;
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut c_new = vec![0.0; n];
        let mut h_new = vec![0.0; n];
        for j in 0..n {
            let i = sig(z(Gate::Input, j));
            let f = sig(z(Gate::Forget, j));
            let o = sig(z(Gate::Output, j));
            let g = z(Gate::Candidate, j).tanh();
            c_new[j] = f * c[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        (c_new, h_new)
    }

    #[test]
    fn reduces_to_plain_lstm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let opts = CellOptions {
            attention: false,
            time_gates: false,
            tau: 1.0,
            history_cap: None,
        };
        for case in 0..100 {
            let (hidden, input) = (rng.random_range(1..7), rng.random_range(1..5));
            let p = random_params(shape(hidden, input, 2), case);
            let mut state = UserRecurrentState::new(hidden);
            state.c = (0..hidden).map(|_| rng.random_range(-2.0..2.0)).collect();
            state.h = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
            state.history.push_back((vec![1.0], vec![0.5; hidden]));
            let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dt = rng.random_range(0.0..1e5);
            let t = cell_forward(&state, &x, &[1.0], dt, &p, &opts);
            let (c, h) = plain_lstm(&p, &x, &state.h, &state.c);
            for j in 0..hidden {
                assert!((t.c[j] - c[j]).abs() <= 1e-12);
                assert!((t.h[j] - h[j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn history_cap_evicts_oldest() {
        let p = random_params(shape(2, 1, 2), 1);
        let opts = CellOptions {
            attention: true,
            time_gates: true,
            tau: 1.0,
            history_cap: Some(2),
        };
        let mut s = UserRecurrentState::new(2);
        for step in 0..4 {
            let x = [step as f64 + 1.0];
            let t = cell_forward(&s, &[0.1], &x, 1.0, &p, &opts);
            if step > 0 {
                assert!((t.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            s.commit(&x, &t, &opts);
        }
        assert_eq!(s.history.len(), 2);
        assert_eq!(s.history[0].0, vec![3.0]);
    }

    #[test]
    fn no_attention_keeps_no_history() {
        let p = random_params(shape(2, 1, 2), 1);
        let opts = CellOptions {
            attention: false,
            time_gates: true,
            tau: 1.0,
            history_cap: None,
        };
        let mut s = UserRecurrentState::new(2);
        let t = cell_forward(&s, &[0.1], &[1.0], 1.0, &p, &opts);
        s.commit(&[1.0], &t, &opts);
        assert!(s.history.is_empty());
    }

    #[test]
    fn predict_examples() {
        let p = ParameterSet::zeros(shape(2, 1, 2));
        let (r, y) = predict(&[0.3, 0.9], &p);
        assert_eq!(r, vec![0.0, 0.0]);
        assert_eq!(y, vec![0.5, 0.5]);
        let y1 = softmax(&[0.1, -0.4, 0.9]);
        let y2 = softmax(&[5.1, 4.6, 5.9]);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k(&[0.1, 0.7, 0.2], 2).unwrap(), vec![1, 2]);
        assert_eq!(top_k(&[0.25; 4], 3).unwrap(), vec![0, 1, 2]);
        assert!(top_k(&[0.5, 0.5], 3).is_err());
        assert_eq!(rank_of(&[0.25; 4], 2), 3);
        assert_eq!(rank_of(&[0.1, 0.7, 0.2], 0), 3);
    }

    proptest! {
        #[test]
        fn prediction_is_bounded(h in prop::collection::vec(-3.0f64..3.0, 3), seed in 0u64..50) {
            let p = random_params(shape(3, 1, 6), seed);
            let (r, y) = predict(&h, &p);
            prop_assert!(r.iter().all(|v| v.abs() < 1.0));
            prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let max = y.iter().copied().fold(f64::MIN, f64::max);
            let min = y.iter().copied().fold(f64::MAX, f64::min);
            prop_assert!(max / min <= 2f64.exp() + 1e-9);
        }

        #[test]
        fn top_k_ignores_monotone_transforms(r in prop::collection::vec(-1.0f64..1.0, 1..20), k in 0usize..20) {
            let k = k.min(r.len());
            let t: Vec<f64> = r.iter().map(|v| (3.0 * v).exp() + 2.0).collect();
            prop_assert_eq!(top_k(&r, k).unwrap(), top_k(&t, k).unwrap());
        }

        #[test]
        fn permuting_history_keeps_attention_vector(
            rows in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.01f64..1.0), 1..8),
            rot in 0usize..8,
        ) {
            let outputs: Vec<Vec<f64>> = rows.iter().map(|(a, b, _)| vec![*a, *b]).collect();
            let total: f64 = rows.iter().map(|r| r.2).sum();
            let alpha: Vec<f64> = rows.iter().map(|r| r.2 / total).collect();
            let base = attention_vector(&alpha, &outputs, 2).unwrap();
            let n = rows.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
            let a2: Vec<f64> = perm.iter().map(|&i| alpha[i]).collect();
            let o2: Vec<Vec<f64>> = perm.iter().map(|&i| outputs[i].clone()).collect();
            let moved = attention_vector(&a2, &o2, 2).unwrap();
            for (x, y) in base.iter().zip(&moved) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn gates_stay_in_range(x in prop::collection::vec(-5.0f64..5.0, 2), seed in 0u64..30, dt in 0.0f64..1e6) {
            let p = random_params(shape(3, 2, 2), seed);
            let opts = CellOptions { attention: true, time_gates: true, tau: 3600.0, history_cap: None };
            let mut s = UserRecurrentState::new(3);
            s.history.push_back((vec![1.0, 0.0], vec![0.9, -0.9, 0.1]));
            let t = cell_forward(&s, &x, &[0.5, 0.5], dt, &p, &opts);
            let a = t.attention.unwrap();
            let unit = |v: &f64| *v > 0.0 && *v < 1.0;
            let signed = |v: &f64| v.abs() < 1.0;
            prop_assert!(a.input.iter().all(unit) && a.candidate.iter().all(signed) && a.contribution.iter().all(signed));
            prop_assert!(t.time.input_raw.iter().all(unit) && t.time.forget_raw.iter().all(unit));
            prop_assert!(t.output_gate.iter().all(unit) && t.candidate.iter().all(signed));
            prop_assert!(t.h.iter().all(signed));
        }
    }
}
