//! Minibatch Adam training with seeded sampling and periodic evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::metrics::EvalRecord;
use crate::network::{MlpParams, NetConfig};
use crate::objective::{mean_loss_and_grad, ImplicitLoss, Objective};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Stream ids carved out of one seed so that sampling, evaluation and
/// held-out loss draws never share random numbers.
pub(crate) const SAMPLER_STREAM: u64 = 1;
pub(crate) const HOLDOUT_STREAM: u64 = 2;
pub const EVAL_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub eta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 128,
            steps: 20_000,
            eval_every: 200,
            seed: 0,
            eta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Config("eta must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn for_params(params: &MlpParams) -> Self {
        Self::new(params.len())
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || state.v.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Evaluator output at every evaluation step.
    pub curve: Vec<EvalRecord>,
    /// Mean loss on a fixed batch of training rows at every evaluation step.
    pub holdout_loss: Vec<(usize, f64)>,
}

/// Metric callback invoked with `(step, params)` every `eval_every` steps.
pub trait Evaluator {
    fn evaluate(&mut self, step: usize, params: &MlpParams) -> Result<Vec<(String, f64)>>;
}

impl<F> Evaluator for F
where
    F: FnMut(usize, &MlpParams) -> Result<Vec<(String, f64)>>,
{
    fn evaluate(&mut self, step: usize, params: &MlpParams) -> Result<Vec<(String, f64)>> {
        self(step, params)
    }
}

/// Evaluator that records nothing.
pub fn no_eval(_: usize, _: &MlpParams) -> Result<Vec<(String, f64)>> {
    Ok(Vec::new())
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains `params` in place on `objective`. Minibatches are drawn uniformly
/// with replacement from the seeded sampler stream.
pub fn train_with<O: Objective>(
    dataset: &Dataset,
    mut params: MlpParams,
    objective: &O,
    config: &TrainConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    config.validate()?;
    let n = dataset.len();
    let mut sampler = stream_rng(config.seed, SAMPLER_STREAM);
    let mut holdout_rng = stream_rng(config.seed, HOLDOUT_STREAM);
    let holdout: Vec<usize> = (0..config.batch_size.min(n))
        .map(|_| holdout_rng.random_range(0..n))
        .collect();

    let mut state = AdamState::for_params(&params);
    let mut grad = params.zeros_like();
    let mut ws = O::Workspace::default();
    let mut batch = vec![0usize; config.batch_size];
    let mut curve = Vec::new();
    let mut holdout_loss = Vec::new();

    let mut record = |step: usize, params: &MlpParams, ws: &mut O::Workspace| -> Result<()> {
        for (metric, value) in evaluator.evaluate(step, params)? {
            curve.push(EvalRecord {
                step,
                metric,
                value,
                seed: config.seed,
            });
        }
        let mut total = 0.0;
        for &i in &holdout {
            total += objective.loss(params, dataset.row(i), dataset.target(i), ws)?;
        }
        let loss = total / holdout.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        holdout_loss.push((step, loss));
        Ok(())
    };

    if config.steps == 0 {
        record(0, &params, &mut ws)?;
    }
    for step in 1..=config.steps {
        for slot in batch.iter_mut() {
            *slot = sampler.random_range(0..n);
        }
        let loss = mean_loss_and_grad(
            objective,
            &params,
            batch.iter().map(|&i| (dataset.row(i), dataset.target(i))),
            &mut grad,
            &mut ws,
        )?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        adam_step(params.as_mut_slice(), grad.as_slice(), &mut state, config.learning_rate)?;
        if step % config.eval_every == 0 || step == config.steps {
            record(step, &params, &mut ws)?;
        }
    }
    Ok(TrainOutcome {
        params,
        curve,
        holdout_loss,
    })
}

/// Trains the implicit network `f(x, y)` from a Xavier initialization.
pub fn train(
    dataset: &Dataset,
    net_config: &NetConfig,
    config: &TrainConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<TrainOutcome> {
    if net_config.input_dim != dataset.dim() + 1 {
        return Err(Error::Dimension {
            expected: dataset.dim() + 1,
            got: net_config.input_dim,
        });
    }
    let params = MlpParams::init_xavier(net_config, config.seed)?;
    train_with(dataset, params, &ImplicitLoss { eta: config.eta }, config, evaluator)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent scalar Adam written from the textbook update.
    fn reference_adam(g: &[f64], lr: f64, theta0: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, theta0);
        let mut out = Vec::new();
        for (k, &gk) in g.iter().enumerate() {
            let t = (k + 1) as f64;
            m = b1 * m + (1.0 - b1) * gk;
            v = b2 * v + (1.0 - b2) * gk * gk;
            let mh = m / (1.0 - b1.powf(t));
            let vh = v / (1.0 - b2.powf(t));
            theta -= lr * mh / (vh.sqrt() + eps);
            out.push(theta);
        }
        out
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5, -1.0, 2.0];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        let g = 0.37;
        adam_step(&mut p, &[g], &mut s, 0.01).unwrap();
        let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_trace_matches_reference() {
        let grads = vec![0.8; 10];
        let reference = reference_adam(&grads, 0.05, 0.3);
        let mut p = vec![0.3];
        let mut s = AdamState::new(1);
        for (k, &g) in grads.iter().enumerate() {
            adam_step(&mut p, &[g], &mut s, 0.05).unwrap();
            assert!((p[0] - reference[k]).abs() <= 1e-12, "step {k}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut s, 0.1).is_err());
        assert!(adam_step(&mut [0.0; 2], &[0.0; 3], &mut s, 0.1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
