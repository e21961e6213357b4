//! The implicit-function modal regression loss
//! `l(x, y) = f² + (∂f/∂y + 1)² + η (∂²f/∂y²)²`.

use crate::error::{Error, Result};
use crate::jets::Jet2;
use crate::network::{ForwardTrace, JetScratch, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub eta: f64,
}

impl LossConfig {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta must be >= 0, got {eta}")));
        }
        Ok(Self { eta })
    }
}

#[inline]
pub fn local_loss(jet: Jet2, eta: f64) -> f64 {
    let slope = jet.d1 + 1.0;
    jet.v * jet.v + slope * slope + eta * jet.d2 * jet.d2
}

/// `∂l/∂(f, f_y, f_yy)`.
#[inline]
pub fn loss_upstream(jet: Jet2, eta: f64) -> (f64, f64, f64) {
    (2.0 * jet.v, 2.0 * (jet.d1 + 1.0), 2.0 * eta * jet.d2)
}

/// A per-sample training loss over a network.
pub trait Objective {
    type Workspace: Default;

    /// Loss at one sample.
    fn loss(&self, params: &MlpParams, x: &[f64], y: f64, ws: &mut Self::Workspace) -> Result<f64>;

    /// Loss at one sample; its parameter gradient is added into `grad`.
    fn accumulate(
        &self,
        params: &MlpParams,
        x: &[f64],
        y: f64,
        grad: &mut MlpParams,
        ws: &mut Self::Workspace,
    ) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitLoss {
    pub eta: f64,
}

#[derive(Debug, Default)]
pub struct ImplicitWorkspace {
    trace: ForwardTrace,
    scratch: JetScratch,
}

impl Objective for ImplicitLoss {
    type Workspace = ImplicitWorkspace;

    fn loss(&self, params: &MlpParams, x: &[f64], y: f64, ws: &mut ImplicitWorkspace) -> Result<f64> {
        let jet = params.forward_jet_into(x, y, &mut ws.trace)?;
        Ok(local_loss(jet, self.eta))
    }

    fn accumulate(
        &self,
        params: &MlpParams,
        x: &[f64],
        y: f64,
        grad: &mut MlpParams,
        ws: &mut ImplicitWorkspace,
    ) -> Result<f64> {
        let jet = params.forward_jet_into(x, y, &mut ws.trace)?;
        let up = loss_upstream(jet, self.eta);
        params.backward_jet_into(&ws.trace, up, grad, &mut ws.scratch)?;
        Ok(local_loss(jet, self.eta))
    }
}

/// Mean loss and mean parameter gradient of `objective` over `batch`.
pub fn mean_loss_and_grad<'a, O: Objective>(
    objective: &O,
    params: &MlpParams,
    batch: impl IntoIterator<Item = (&'a [f64], f64)>,
    grad: &mut MlpParams,
    ws: &mut O::Workspace,
) -> Result<f64> {
    grad.as_mut_slice().fill(0.0);
    let mut total = 0.0;
    let mut n = 0usize;
    for (x, y) in batch {
        total += objective.accumulate(params, x, y, grad, ws)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    let inv = 1.0 / n as f64;
    grad.as_mut_slice().iter_mut().for_each(|g| *g *= inv);
    Ok(total * inv)
}

/// Mean implicit loss over `(x, y)` pairs and its parameter gradient.
pub fn batch_loss_and_grad(
    params: &MlpParams,
    batch: &[(Vec<f64>, f64)],
    eta: f64,
) -> Result<(f64, MlpParams)> {
    let mut grad = params.zeros_like();
    let mut ws = ImplicitWorkspace::default();
    let loss = mean_loss_and_grad(
        &ImplicitLoss { eta },
        params,
        batch.iter().map(|(x, y)| (x.as_slice(), *y)),
        &mut grad,
        &mut ws,
    )?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetConfig};
    use proptest::prelude::*;

    #[test]
    fn local_loss_examples() {
        assert_eq!(local_loss(Jet2::new(0.0, -1.0, 5.0), 0.0), 0.0);
        assert_eq!(local_loss(Jet2::new(1.0, 0.0, 0.0), 0.0), 2.0);
        assert_eq!(local_loss(Jet2::new(0.5, -0.5, 2.0), 1.0), 4.5);
    }

    #[test]
    fn upstream_examples() {
        assert_eq!(loss_upstream(Jet2::new(0.0, -1.0, 5.0), 0.0), (0.0, 0.0, 0.0));
        assert_eq!(loss_upstream(Jet2::new(1.0, 0.0, 3.0), 0.0), (2.0, 2.0, 0.0));
        assert_eq!(loss_upstream(Jet2::new(0.5, -0.5, 2.0), 1.0), (1.0, 1.0, 4.0));
    }

    #[test]
    fn negative_eta_rejected() {
        assert!(LossConfig::new(-0.1).is_err());
        assert!(LossConfig::new(0.5).is_ok());
    }

    /// f(x, y) = -y with identity units: jet (-y, -1, 0) so the loss is y².
    fn negated_y_net() -> MlpParams {
        let config = NetConfig {
            input_dim: 2,
            hidden_sizes: vec![1],
            activation: Activation::Identity,
            output_activation: Activation::Identity,
            output_dim: 1,
        };
        let mut p = MlpParams::zeros(&config).unwrap();
        p.weights_mut(0).copy_from_slice(&[0.0, -1.0]);
        p.weights_mut(1).copy_from_slice(&[1.0]);
        p
    }

    #[test]
    fn zero_loss_sample_has_zero_gradient() {
        let p = negated_y_net();
        let (loss, grad) = batch_loss_and_grad(&p, &[(vec![0.7], 0.0)], 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_samples_leave_mean_unchanged() {
        let p = MlpParams::init_xavier(&NetConfig::implicit(1, &[4]), 2).unwrap();
        let s = (vec![0.3], -0.4);
        let (l1, g1) = batch_loss_and_grad(&p, std::slice::from_ref(&s), 0.2).unwrap();
        let (l2, g2) = batch_loss_and_grad(&p, &[s.clone(), s], 0.2).unwrap();
        assert!((l1 - l2).abs() <= 1e-15 * l1.abs());
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = MlpParams::init_xavier(&NetConfig::implicit(1, &[4]), 2).unwrap();
        assert!(batch_loss_and_grad(&p, &[], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative(v in -5.0..5.0f64, d1 in -5.0..5.0f64, d2 in -5.0..5.0f64, eta in 0.0..2.0f64) {
            prop_assert!(local_loss(Jet2::new(v, d1, d2), eta) >= 0.0);
        }

        #[test]
        fn loss_vanishes_only_at_modes(v in -1.0..1.0f64, d1 in -2.0..0.0f64, d2 in -1.0..1.0f64) {
            let l = local_loss(Jet2::new(v, d1, d2), 0.5);
            let at_mode = v == 0.0 && d1 == -1.0 && d2 == 0.0;
            prop_assert_eq!(l == 0.0, at_mode);
            prop_assert_eq!(local_loss(Jet2::new(0.0, -1.0, d2), 0.0), 0.0);
        }
    }
}
