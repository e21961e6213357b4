//! Mixture density network: the network emits `3K` raw outputs laid out as
//! `[logits (K), means (K), log-sds (K)]`, mapped to a Gaussian mixture by
//! softmax, identity and clamped exponential respectively.

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::network::{Activation, MlpParams, NetConfig};
use crate::objective::Objective;
use crate::prediction::{ModeGrid, ModeSet};
use crate::training::{train_with, Evaluator, TrainConfig, TrainOutcome};

use super::kde::{argmax_or_midpoint, density_mode_sets, log_sum_exp};
use super::regression::PlainWorkspace;

pub const LOG_SD_CLAMP: f64 = 7.0;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct MdnHead {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub log_sds: Vec<f64>,
    ln_weights: Vec<f64>,
    /// Whether each raw log-sd was inside the clamp range (gradient passes).
    unclamped: Vec<bool>,
}

impl MdnHead {
    pub fn from_outputs(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || !raw.len().is_multiple_of(3) {
            return Err(Error::Shape(format!("MDN head needs 3K outputs, got {}", raw.len())));
        }
        let k = raw.len() / 3;
        let logits = &raw[..k];
        let lse = log_sum_exp(logits);
        let ln_weights: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        let weights = ln_weights.iter().map(|l| l.exp()).collect();
        let log_sds = raw[2 * k..]
            .iter()
            .map(|s| s.clamp(-LOG_SD_CLAMP, LOG_SD_CLAMP))
            .collect();
        let unclamped = raw[2 * k..].iter().map(|s| s.abs() < LOG_SD_CLAMP).collect();
        Ok(Self {
            weights,
            means: raw[k..2 * k].to_vec(),
            log_sds,
            ln_weights,
            unclamped,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// `ln π_k + ln N(y; μ_k, σ_k)` per component.
    fn ln_terms(&self, y: f64) -> Vec<f64> {
        (0..self.components())
            .map(|k| {
                let z = (y - self.means[k]) * (-self.log_sds[k]).exp();
                self.ln_weights[k] - 0.5 * z * z - self.log_sds[k] - LN_SQRT_2PI
            })
            .collect()
    }

    pub fn ln_density(&self, y: f64) -> f64 {
        log_sum_exp(&self.ln_terms(y))
    }

    pub fn nll(&self, y: f64) -> f64 {
        -self.ln_density(y)
    }

    /// NLL and its gradient with respect to the raw outputs.
    pub fn nll_and_grad(&self, y: f64, grad: &mut Vec<f64>) -> f64 {
        let k = self.components();
        let terms = self.ln_terms(y);
        let lse = log_sum_exp(&terms);
        grad.clear();
        grad.resize(3 * k, 0.0);
        for c in 0..k {
            let resp = (terms[c] - lse).exp();
            let inv_var = (-2.0 * self.log_sds[c]).exp();
            let r = y - self.means[c];
            grad[c] = self.weights[c] - resp;
            grad[k + c] = -resp * r * inv_var;
            grad[2 * k + c] = if self.unclamped[c] {
                resp * (1.0 - r * r * inv_var)
            } else {
                0.0
            };
        }
        -lse
    }
}

/// Mean negative log-likelihood objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MdnLoss;

impl Objective for MdnLoss {
    type Workspace = PlainWorkspace;

    fn loss(&self, params: &MlpParams, x: &[f64], y: f64, ws: &mut PlainWorkspace) -> Result<f64> {
        params.forward_plain_into(x, &mut ws.trace)?;
        Ok(MdnHead::from_outputs(ws.trace.output())?.nll(y))
    }

    fn accumulate(
        &self,
        params: &MlpParams,
        x: &[f64],
        y: f64,
        grad: &mut MlpParams,
        ws: &mut PlainWorkspace,
    ) -> Result<f64> {
        params.forward_plain_into(x, &mut ws.trace)?;
        let head = MdnHead::from_outputs(ws.trace.output())?;
        let nll = head.nll_and_grad(y, &mut ws.upstream);
        params.backward_plain_into(&ws.trace, &ws.upstream, grad, &mut ws.scratch)?;
        Ok(nll)
    }
}

/// Network shape for a `components`-way mixture head on `feature_dim` inputs.
pub fn mdn_net_config(feature_dim: usize, hidden_sizes: &[usize], components: usize) -> NetConfig {
    NetConfig {
        input_dim: feature_dim,
        hidden_sizes: hidden_sizes.to_vec(),
        activation: Activation::Tanh,
        output_activation: Activation::Identity,
        output_dim: 3 * components,
    }
}

pub fn mdn_train(
    dataset: &Dataset,
    net: &NetConfig,
    components: usize,
    config: &TrainConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<TrainOutcome> {
    if components == 0 {
        return Err(Error::Config("MDN needs at least one component".into()));
    }
    if net.output_dim != 3 * components || net.input_dim != dataset.dim() {
        return Err(Error::Config(format!(
            "MDN network must map {} inputs to {} outputs",
            dataset.dim(),
            3 * components
        )));
    }
    let params = MlpParams::init_xavier(net, config.seed)?;
    train_with(dataset, params, &MdnLoss, config, evaluator)
}

pub fn mdn_head(params: &MlpParams, x: &[f64]) -> Result<MdnHead> {
    MdnHead::from_outputs(&params.forward(x)?)
}

pub fn mdn_nll(params: &MlpParams, x: &[f64], y: f64) -> Result<f64> {
    let nll = mdn_head(params, x)?.nll(y);
    if !nll.is_finite() {
        return Err(Error::Diverged { step: 0, loss: nll });
    }
    Ok(nll)
}

/// Grid argmax of the learned conditional density.
pub fn mdn_mode(params: &MlpParams, x: &[f64], grid: &ModeGrid) -> Result<f64> {
    let head = mdn_head(params, x)?;
    let profile: Vec<f64> = grid.values().iter().map(|&y| head.ln_density(y)).collect();
    Ok(argmax_or_midpoint(&profile, grid))
}

pub fn mdn_mode_sets(params: &MlpParams, x: &[f64], grid: &ModeGrid) -> Result<(ModeSet, ModeSet)> {
    let head = mdn_head(params, x)?;
    let profile: Vec<f64> = grid.values().iter().map(|&y| head.ln_density(y)).collect();
    density_mode_sets(&profile, grid)
}
