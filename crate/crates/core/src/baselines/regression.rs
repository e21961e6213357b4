use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::network::{MlpParams, NetConfig, PlainTrace};
use crate::objective::Objective;
use crate::training::{train_with, Evaluator, TrainConfig, TrainOutcome};

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

/// Pointwise regression loss on the residual `r = prediction − y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegressionLoss {
    /// `r² / 2`
    Squared,
    /// `r² / 2` for `|r| ≤ δ`, `δ(|r| − δ/2)` beyond.
    Huber { delta: f64 },
}

impl RegressionLoss {
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RegressionLoss::Squared => 0.5 * r * r,
            RegressionLoss::Huber { delta } => {
                if r.abs() <= delta {
                    0.5 * r * r
                } else {
                    delta * (r.abs() - 0.5 * delta)
                }
            }
        }
    }

    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            RegressionLoss::Squared => r,
            RegressionLoss::Huber { delta } => r.clamp(-delta, delta),
        }
    }
}

#[derive(Debug, Default)]
pub struct PlainWorkspace {
    pub(crate) trace: PlainTrace,
    pub(crate) scratch: Vec<f64>,
    pub(crate) upstream: Vec<f64>,
}

impl Objective for RegressionLoss {
    type Workspace = PlainWorkspace;

    fn loss(&self, params: &MlpParams, x: &[f64], y: f64, ws: &mut PlainWorkspace) -> Result<f64> {
        params.forward_plain_into(x, &mut ws.trace)?;
        Ok(self.value(ws.trace.output()[0] - y))
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
        let r = ws.trace.output()[0] - y;
        ws.upstream.clear();
        ws.upstream.push(self.derivative(r));
        params.backward_plain_into(&ws.trace, &ws.upstream, grad, &mut ws.scratch)?;
        Ok(self.value(r))
    }
}

fn check_regressor(dataset: &Dataset, net: &NetConfig) -> Result<()> {
    if net.input_dim != dataset.dim() {
        return Err(Error::Dimension {
            expected: dataset.dim(),
            got: net.input_dim,
        });
    }
    if net.output_dim != 1 {
        return Err(Error::Config("regressor needs output_dim = 1".into()));
    }
    Ok(())
}

/// Trains `x -> y` with `loss` from a Xavier initialization.
pub fn regression_train(
    dataset: &Dataset,
    net: &NetConfig,
    config: &TrainConfig,
    loss: RegressionLoss,
    evaluator: &mut dyn Evaluator,
) -> Result<TrainOutcome> {
    check_regressor(dataset, net)?;
    let params = MlpParams::init_xavier(net, config.seed)?;
    train_with(dataset, params, &loss, config, evaluator)
}

pub fn l2_train(
    dataset: &Dataset,
    net: &NetConfig,
    config: &TrainConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<TrainOutcome> {
    regression_train(dataset, net, config, RegressionLoss::Squared, evaluator)
}

pub fn huber_train(
    dataset: &Dataset,
    net: &NetConfig,
    config: &TrainConfig,
    delta: f64,
    evaluator: &mut dyn Evaluator,
) -> Result<TrainOutcome> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("huber delta must be > 0, got {delta}")));
    }
    regression_train(dataset, net, config, RegressionLoss::Huber { delta }, evaluator)
}

/// Scalar prediction of a trained regressor.
pub fn regress(params: &MlpParams, x: &[f64]) -> Result<f64> {
    Ok(params.forward(x)?[0])
}
