use serde::{Deserialize, Serialize};

use super::mlp::NetParams;
use crate::error::{Error, Result};
use crate::ndtape::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptConfig {
    pub kind: OptKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            kind: OptKind::Adam,
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptConfig {
    pub fn sgd(lr: f64) -> Self {
        OptConfig { kind: OptKind::Sgd, lr, ..Default::default() }
    }

    pub fn adam(lr: f64) -> Self {
        OptConfig { kind: OptKind::Adam, lr, ..Default::default() }
    }
}

/// Optimizer state for one parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub config: OptConfig,
    /// First moments, one per parameter tensor. Empty for SGD.
    pub m: Vec<Tensor>,
    /// Second moments, one per parameter tensor. Empty for SGD.
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptState {
    pub fn new(config: OptConfig, params: &[&Tensor]) -> Self {
        let (m, v) = match config.kind {
            OptKind::Sgd => (Vec::new(), Vec::new()),
            OptKind::Adam => {
                let z: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
                (z.clone(), z)
            }
        };
        OptState { config, m, v, step: 0 }
    }

    pub fn for_net(config: OptConfig, net: &NetParams) -> Self {
        OptState::new(config, &net.tensors())
    }

    /// Applies one update in place.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape("optimizer", p.shape(), g.shape()));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { index: i });
            }
        }
        self.step += 1;
        let c = self.config;
        match c.kind {
            OptKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= c.lr * gv;
                    }
                }
            }
            OptKind::Adam => {
                if self.m.len() != params.len() {
                    return Err(Error::InvalidArgument("optimizer built for a different parameter list".into()));
                }
                let t = self.step as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    if self.m[i].shape() != p.shape() {
                        return Err(Error::shape("adam", self.m[i].shape(), p.shape()));
                    }
                    let m = self.m[i].data_mut();
                    let v = self.v[i].data_mut();
                    for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                        *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                        *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= c.lr * mhat / (vhat.sqrt() + c.eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// One step on a network's parameters, gradients in [`NetParams::tensors`] order.
    pub fn step_net(&mut self, net: &mut NetParams, grads: &[Tensor]) -> Result<()> {
        let mut params = net.tensors_mut();
        self.update(&mut params, grads)
    }
}
