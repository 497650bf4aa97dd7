//! Unrolled forward pass over a user's steps, recorded on a tape, and exact
//! reverse-mode gradients through it.

use std::ops::Range;

use rand_chacha::ChaCha8Rng;

use crate::cell::{cell_forward, CellOptions, CellTrace, UserRecurrentState};
use crate::error::{Error, Result};
use crate::interaction::{ColumnSource, EmbeddingTable, InteractionInput};
use crate::linalg::{matvec_acc, matvec_t_acc, outer_acc, softmax};
use crate::params::{Gate, ParameterSet, Tensor, Variant};
use crate::train::dropout::{apply_dropout, Mode};
use crate::train::loss::{loss, loss_grad};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub variant: Variant,
    pub cell: CellOptions,
    /// Replace the `tanh` on item scores by the identity (testing aid).
    pub linear_head: bool,
}

impl ModelOptions {
    pub fn new(variant: Variant, tau: f64, history_cap: Option<usize>) -> Self {
        ModelOptions {
            variant,
            cell: CellOptions::for_variant(variant, tau, history_cap),
            linear_head: false,
        }
    }
}

/// One target-network step of a user's sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInput {
    /// Topical context `x_a | x_b`.
    pub x: Vec<f64>,
    /// Seconds since the previous target event (infinite for the first).
    pub delta_t: f64,
    /// Observed item, when the step contributes to the loss.
    pub target: Option<usize>,
}

pub enum Dropout<'a> {
    Off,
    Sample {
        p: f64,
        rng: &'a mut ChaCha8Rng,
    },
    /// Replays previously drawn masks, one per step.
    Fixed(&'a [Vec<f64>]),
}

/// Activations retained from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeStep {
    pub x: Vec<f64>,
    pub interaction: Option<InteractionInput>,
    pub input: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub h_prev: Vec<f64>,
    /// Tape index of the step that produced `h_prev`, if it is on the tape.
    pub prev_ref: Option<usize>,
    /// Tape index of each attended history output; `None` for constants.
    pub history_refs: Vec<Option<usize>>,
    pub trace: CellTrace,
    pub mask: Vec<f64>,
    pub h_drop: Vec<f64>,
    pub r: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub user: usize,
    pub options: ModelOptions,
    pub steps: Vec<TapeStep>,
    pub final_state: UserRecurrentState,
}

/// Pooled LSTM input for a context: the interaction layer's output, or the
/// raw context when the variant bypasses it.
pub fn step_input(
    params: &ParameterSet,
    opts: &ModelOptions,
    user: usize,
    x: &[f64],
) -> Result<(Vec<f64>, Option<InteractionInput>)> {
    let expected = 2 * params.shape().num_topics;
    if x.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: x.len(),
        });
    }
    if opts.variant.interaction_input() {
        let table = EmbeddingTable::from_params(params);
        let inter = InteractionInput::build(x, user, &table, opts.variant.higher_order())?;
        Ok((inter.pooled.clone(), Some(inter)))
    } else {
        if user >= params.shape().num_users {
            return Err(Error::UnknownUser(format!("#{user}")));
        }
        Ok((x.to_vec(), None))
    }
}

fn head(params: &ParameterSet, h: &[f64], linear: bool) -> (Vec<f64>, Vec<f64>) {
    let mut r = params.tensor(Tensor::HeadB).to_vec();
    matvec_acc(params.tensor(Tensor::HeadW), h, &mut r);
    if !linear {
        r.iter_mut().for_each(|v| *v = v.tanh());
    }
    let y = softmax(&r);
    (r, y)
}

/// Forward pass of one step from `state`.
pub fn forward_step(
    params: &ParameterSet,
    opts: &ModelOptions,
    user: usize,
    state: &UserRecurrentState,
    step: &StepInput,
    mask: Option<Vec<f64>>,
) -> Result<TapeStep> {
    let (input, interaction) = step_input(params, opts, user, &step.x)?;
    let trace = cell_forward(state, &input, &step.x, step.delta_t, params, &opts.cell);
    let mask = mask.unwrap_or_else(|| vec![1.0; trace.h.len()]);
    if mask.len() != trace.h.len() {
        return Err(Error::DimensionMismatch {
            expected: trace.h.len(),
            actual: mask.len(),
        });
    }
    let h_drop: Vec<f64> = trace.h.iter().zip(&mask).map(|(a, b)| a * b).collect();
    let (r, y_hat) = head(params, &h_drop, opts.linear_head);
    if let Some(t) = step.target {
        if t >= y_hat.len() {
            return Err(Error::UnknownItem(format!("#{t}")));
        }
    }
    Ok(TapeStep {
        x: step.x.clone(),
        interaction,
        input,
        c_prev: state.c.clone(),
        h_prev: state.h.clone(),
        prev_ref: None,
        history_refs: vec![None; state.history.len()],
        trace,
        mask,
        h_drop,
        r,
        y_hat,
        target: step.target,
    })
}

/// Unrolls the model over `steps` starting from `init`. History and state
/// carried in by `init` are constants of the tape.
pub fn forward_sequence(
    params: &ParameterSet,
    opts: &ModelOptions,
    user: usize,
    steps: &[StepInput],
    init: UserRecurrentState,
    mut dropout: Dropout,
) -> Result<Tape> {
    let hidden = params.shape().hidden;
    if init.hidden() != hidden {
        return Err(Error::DimensionMismatch {
            expected: hidden,
            actual: init.hidden(),
        });
    }
    let mut state = init;
    let mut refs: std::collections::VecDeque<Option<usize>> = state.history.iter().map(|_| None).collect();
    let mut tape = Vec::with_capacity(steps.len());
    for (t, step) in steps.iter().enumerate() {
        let mask = match &mut dropout {
            Dropout::Off => None,
            Dropout::Sample { p, rng } => Some(apply_dropout(&vec![1.0; hidden], *p, Mode::Train, *rng).1),
            Dropout::Fixed(masks) => Some(
                masks
                    .get(t)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument("missing dropout mask".into()))?,
            ),
        };
        let mut rec = forward_step(params, opts, user, &state, step, mask)?;
        rec.prev_ref = t.checked_sub(1);
        rec.history_refs = refs.iter().copied().collect();
        state.commit(&step.x, &rec.trace, &opts.cell);
        if opts.cell.attention {
            refs.push_back(Some(t));
            while refs.len() > state.history.len() {
                refs.pop_front();
            }
        }
        tape.push(rec);
    }
    Ok(Tape {
        user,
        options: *opts,
        steps: tape,
        final_state: state,
    })
}

impl Tape {
    /// Summed loss over steps that carry a target.
    pub fn loss(&self) -> f64 {
        self.steps
            .iter()
            .filter_map(|s| s.target.map(|t| loss(&s.y_hat, t)))
            .sum()
    }

    pub fn masks(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.mask.clone()).collect()
    }

    pub fn backward(&self, params: &ParameterSet) -> ParameterSet {
        self.backward_truncated(params, None)
    }

    /// Gradient of [`Tape::loss`]. With a horizon `n`, the tape is cut into
    /// consecutive chunks of `n` steps and no gradient crosses a chunk
    /// boundary.
    pub fn backward_truncated(&self, params: &ParameterSet, horizon: Option<usize>) -> ParameterSet {
        self.backward_with(params, horizon, |_, s| {
            let target = s.target?;
            let dy = loss_grad(&s.y_hat, target);
            let inner: f64 = s.y_hat.iter().zip(&dy).map(|(a, b)| a * b).sum();
            Some(s.y_hat.iter().zip(&dy).map(|(y, d)| y * (d - inner)).collect())
        })
    }

    /// Gradient of the linear objective `Σ_t ⟨w_t, r_t⟩` over the item
    /// scores, with `w_t = weights[t]`.
    pub fn backward_scores(&self, params: &ParameterSet, weights: &[Vec<f64>]) -> ParameterSet {
        self.backward_with(params, None, |t, _| weights.get(t).cloned())
    }

    fn backward_with<F>(&self, params: &ParameterSet, horizon: Option<usize>, d_scores: F) -> ParameterSet
    where
        F: FnMut(usize, &TapeStep) -> Option<Vec<f64>>,
    {
        backward_steps(params, &self.options, self.user, &self.steps, horizon, d_scores)
    }
}

/// Loss gradient of a single recorded step, with its incoming state and
/// history treated as constants.
pub fn step_gradient(params: &ParameterSet, opts: &ModelOptions, user: usize, step: &TapeStep) -> ParameterSet {
    let mut step = step.clone();
    step.prev_ref = None;
    step.history_refs.iter_mut().for_each(|r| *r = None);
    let tape = Tape {
        user,
        options: *opts,
        steps: vec![step],
        final_state: UserRecurrentState::new(0),
    };
    tape.backward(params)
}

fn backward_steps<F>(
    params: &ParameterSet,
    options: &ModelOptions,
    user: usize,
    steps: &[TapeStep],
    horizon: Option<usize>,
    mut d_scores: F,
) -> ParameterSet
where
    F: FnMut(usize, &TapeStep) -> Option<Vec<f64>>,
{
    let hidden = params.shape().hidden;
    let chunk = |t: usize| horizon.map_or(0, |n| t / n.max(1));
    let mut grad = params.zeros_like();
    let n = steps.len();
    let mut dh_from_later = vec![vec![0.0; hidden]; n];
    let mut dc_carry = vec![0.0; hidden];

    for t in (0..n).rev() {
        let s = &steps[t];
        let tr = &s.trace;
        let mut dh = std::mem::take(&mut dh_from_later[t]);

        if let Some(dr) = d_scores(t, s) {
            let dz: Vec<f64> = dr
                .iter()
                .zip(&s.r)
                .map(|(d, r)| if options.linear_head { *d } else { d * (1.0 - r * r) })
                .collect();
            outer_acc(grad.tensor_mut(Tensor::HeadW), &dz, &s.h_drop);
            for (g, v) in grad.tensor_mut(Tensor::HeadB).iter_mut().zip(&dz) {
                *g += v;
            }
            let mut dh_drop = vec![0.0; hidden];
            matvec_t_acc(params.tensor(Tensor::HeadW), &dz, &mut dh_drop);
            for ((d, g), m) in dh.iter_mut().zip(&dh_drop).zip(&s.mask) {
                *d += g * m;
            }
        }

        let mut dc = std::mem::replace(&mut dc_carry, vec![0.0; hidden]);
        for j in 0..hidden {
            dc[j] += dh[j] * tr.output_gate[j] * (1.0 - tr.tanh_c[j] * tr.tanh_c[j]);
        }
        let time = &tr.time;
        let dz_o: Vec<f64> = (0..hidden)
            .map(|j| dh[j] * tr.tanh_c[j] * tr.output_gate[j] * (1.0 - tr.output_gate[j]))
            .collect();
        let dz_f: Vec<f64> = (0..hidden)
            .map(|j| dc[j] * s.c_prev[j] * time.forget_scale * time.forget_raw[j] * (1.0 - time.forget_raw[j]))
            .collect();
        let dz_i: Vec<f64> = (0..hidden)
            .map(|j| dc[j] * tr.candidate[j] * time.input_scale * time.input_raw[j] * (1.0 - time.input_raw[j]))
            .collect();
        let dz_c: Vec<f64> = (0..hidden)
            .map(|j| dc[j] * time.input[j] * (1.0 - tr.candidate[j] * tr.candidate[j]))
            .collect();

        let mut d_input = vec![0.0; s.input.len()];
        let mut dh_prev = vec![0.0; hidden];
        for (gate, dz) in [
            (Gate::Output, &dz_o),
            (Gate::Forget, &dz_f),
            (Gate::Input, &dz_i),
            (Gate::Candidate, &dz_c),
        ] {
            accumulate_gate(
                &mut grad,
                params,
                gate,
                dz,
                &s.input,
                &s.h_prev,
                &mut d_input,
                &mut dh_prev,
            );
        }

        if let Some(a) = &tr.attention {
            let dz_ai: Vec<f64> = (0..hidden)
                .map(|j| dc[j] * a.candidate[j] * a.input[j] * (1.0 - a.input[j]))
                .collect();
            let dz_ac: Vec<f64> = (0..hidden)
                .map(|j| dc[j] * a.input[j] * (1.0 - a.candidate[j] * a.candidate[j]))
                .collect();
            let mut dh_a = vec![0.0; hidden];
            accumulate_gate(
                &mut grad,
                params,
                Gate::AttnInput,
                &dz_ai,
                &s.input,
                &tr.h_a,
                &mut d_input,
                &mut dh_a,
            );
            accumulate_gate(
                &mut grad,
                params,
                Gate::AttnCandidate,
                &dz_ac,
                &s.input,
                &tr.h_a,
                &mut d_input,
                &mut dh_a,
            );
            for (alpha, r) in tr.alpha.iter().zip(&s.history_refs) {
                if let Some(src) = *r {
                    if chunk(src) == chunk(t) {
                        for (d, v) in dh_from_later[src].iter_mut().zip(&dh_a) {
                            *d += alpha * v;
                        }
                    }
                }
            }
        }

        if let Some(prev) = s.prev_ref {
            if chunk(prev) == chunk(t) {
                for (d, v) in dh_from_later[prev].iter_mut().zip(&dh_prev) {
                    *d += v;
                }
                for j in 0..hidden {
                    dc_carry[j] = dc[j] * time.forget[j];
                }
            }
        }

        if let Some(inter) = &s.interaction {
            backward_interaction(&mut grad, inter, &d_input, user);
        }
    }
    grad
}

#[allow(clippy::too_many_arguments)]
fn accumulate_gate(
    grad: &mut ParameterSet,
    params: &ParameterSet,
    gate: Gate,
    dz: &[f64],
    input: &[f64],
    recurrent: &[f64],
    d_input: &mut [f64],
    d_recurrent: &mut [f64],
) {
    outer_acc(grad.tensor_mut(Tensor::W(gate)), dz, input);
    outer_acc(grad.tensor_mut(Tensor::U(gate)), dz, recurrent);
    for (g, v) in grad.tensor_mut(Tensor::B(gate)).iter_mut().zip(dz) {
        *g += v;
    }
    matvec_t_acc(params.tensor(Tensor::W(gate)), dz, d_input);
    matvec_t_acc(params.tensor(Tensor::U(gate)), dz, d_recurrent);
}

fn backward_interaction(grad: &mut ParameterSet, inter: &InteractionInput, d_input: &[f64], user: usize) {
    for col in &inter.columns {
        let d_col: Vec<f64> = if inter.higher_order {
            d_input
                .iter()
                .zip(&inter.first_sum)
                .zip(&col.values)
                .map(|((d, s), c)| d * (1.0 + s - c))
                .collect()
        } else {
            d_input.to_vec()
        };
        let (tensor, row) = match col.source {
            ColumnSource::TopicA(c) => (Tensor::TopicA, c),
            ColumnSource::TopicB(c) => (Tensor::TopicB, c),
            ColumnSource::User(u) => {
                debug_assert_eq!(u, user);
                (Tensor::User, u)
            }
        };
        for (g, d) in grad.row_mut(tensor, row).iter_mut().zip(&d_col) {
            *g += col.weight * d;
        }
    }
}

/// Flat index ranges of every parameter that step `s` of user `user` reads.
pub fn path_ranges(params: &ParameterSet, opts: &ModelOptions, user: usize, s: &TapeStep) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    for g in [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate] {
        for t in [Tensor::W(g), Tensor::U(g), Tensor::B(g)] {
            out.push(params.spec(t).range());
        }
    }
    if s.trace.attention.is_some() {
        for g in [Gate::AttnInput, Gate::AttnCandidate] {
            for t in [Tensor::W(g), Tensor::U(g), Tensor::B(g)] {
                out.push(params.spec(t).range());
            }
        }
    }
    out.push(params.spec(Tensor::HeadW).range());
    out.push(params.spec(Tensor::HeadB).range());
    if opts.variant.interaction_input() {
        if let Some(inter) = &s.interaction {
            for col in &inter.columns {
                let (tensor, row) = match col.source {
                    ColumnSource::TopicA(c) => (Tensor::TopicA, c),
                    ColumnSource::TopicB(c) => (Tensor::TopicB, c),
                    ColumnSource::User(_) => (Tensor::User, user),
                };
                out.push(params.row_range(tensor, row));
            }
        }
    }
    out
}
