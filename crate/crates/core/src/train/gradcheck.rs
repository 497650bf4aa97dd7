//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cell::UserRecurrentState;
use crate::error::{Error, Result};
use crate::model::{forward_sequence, Dropout, ModelOptions, StepInput};
use crate::params::{ModelShape, ParameterSet, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` against `(L(θ+ε) − L(θ−ε)) / 2ε` at `indices`.
pub fn finite_difference_check<F>(
    params: &ParameterSet,
    analytic: &ParameterSet,
    mut loss_fn: F,
    indices: &[usize],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterSet) -> Result<f64>,
{
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let mut probe = params.clone();
    for &i in indices {
        let orig = params.flatten()[i];
        probe.flatten_mut()[i] = orig + eps;
        let up = loss_fn(&probe)?;
        probe.flatten_mut()[i] = orig - eps;
        let down = loss_fn(&probe)?;
        probe.flatten_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss while probing parameter {i}")));
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.flatten()[i];
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Up to `count` distinct parameter indices, sorted.
pub fn sample_indices<R: Rng + ?Sized>(len: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = sample(rng, len, count.min(len)).into_vec();
    idx.sort_unstable();
    idx
}

/// A small random problem for gradient checks.
#[derive(Debug, Clone)]
pub struct TinyProblem {
    pub params: ParameterSet,
    pub options: ModelOptions,
    pub user: usize,
    pub steps: Vec<StepInput>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TinyConfig {
    pub variant: Variant,
    pub num_topics: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub num_items: usize,
    pub num_users: usize,
    pub steps: usize,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            variant: Variant::Full,
            num_topics: 3,
            embed_dim: 3,
            hidden: 4,
            num_items: 6,
            num_users: 2,
            steps: 3,
        }
    }
}

impl TinyProblem {
    /// Random parameters (initialization plus jitter so that biases are not
    /// all zero), sparse random contexts and random targets.
    pub fn random(cfg: TinyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ModelShape::new(
            cfg.variant,
            cfg.num_topics,
            cfg.embed_dim,
            cfg.hidden,
            cfg.num_items,
            cfg.num_users,
        );
        let mut params = ParameterSet::init(shape, &mut rng);
        for v in params.flatten_mut() {
            *v += rng.random_range(-0.25..0.25);
        }
        let tau = 300.0;
        let steps = (0..cfg.steps)
            .map(|t| StepInput {
                x: (0..2 * cfg.num_topics)
                    .map(|_| {
                        if rng.random::<f64>() < 0.4 {
                            0.0
                        } else {
                            rng.random_range(0.0..1.5)
                        }
                    })
                    .collect(),
                delta_t: if t == 0 {
                    f64::INFINITY
                } else {
                    rng.random_range(1.0..3.0 * tau)
                },
                target: Some(rng.random_range(0..cfg.num_items)),
            })
            .collect();
        TinyProblem {
            params,
            options: ModelOptions::new(cfg.variant, tau, None),
            user: rng.random_range(0..cfg.num_users),
            steps,
        }
    }

    pub fn loss(&self, params: &ParameterSet) -> Result<f64> {
        let hidden = params.shape().hidden;
        let tape = forward_sequence(
            params,
            &self.options,
            self.user,
            &self.steps,
            UserRecurrentState::new(hidden),
            Dropout::Off,
        )?;
        Ok(tape.loss())
    }

    pub fn gradient(&self) -> Result<ParameterSet> {
        let hidden = self.params.shape().hidden;
        let tape = forward_sequence(
            &self.params,
            &self.options,
            self.user,
            &self.steps,
            UserRecurrentState::new(hidden),
            Dropout::Off,
        )?;
        Ok(tape.backward(&self.params))
    }
}

/// Backward pass against finite differences on `samples` random parameters.
pub fn check_gradients(problem: &TinyProblem, samples: usize, eps: f64, seed: u64) -> Result<GradCheckReport> {
    let grad = problem.gradient()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = sample_indices(problem.params.len(), samples, &mut rng);
    finite_difference_check(&problem.params, &grad, |p| problem.loss(p), &idx, eps)
}

/// Same check with one gradient entry doubled: the entry of largest
/// magnitude among the sampled indices.
pub fn mutation_check(problem: &TinyProblem, samples: usize, eps: f64, seed: u64) -> Result<GradCheckReport> {
    let mut grad = problem.gradient()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = sample_indices(problem.params.len(), samples, &mut rng);
    let &target = idx
        .iter()
        .max_by(|&&a, &&b| grad.flatten()[a].abs().total_cmp(&grad.flatten()[b].abs()))
        .ok_or_else(|| Error::InvalidArgument("nothing to check".into()))?;
    grad.flatten_mut()[target] *= 2.0;
    finite_difference_check(&problem.params, &grad, |p| problem.loss(p), &idx, eps)
}
