use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtape::{Rng, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

    pub fn leaky() -> Self {
        Activation::LeakyRelu(Self::DEFAULT_LEAKY_SLOPE)
    }

    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu(s) => tape.leaky_relu(x, s),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }

    pub(crate) fn code(self) -> (u8, f64) {
        match self {
            Activation::Identity => (0, 0.0),
            Activation::Tanh => (1, 0.0),
            Activation::Relu => (2, 0.0),
            Activation::LeakyRelu(s) => (3, s),
            Activation::Sigmoid => (4, 0.0),
        }
    }

    pub(crate) fn from_code(code: u8, slope: f64) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            2 => Activation::Relu,
            3 => Activation::LeakyRelu(slope),
            4 => Activation::Sigmoid,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

/// Parameters of a fully-connected network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub layers: Vec<Layer>,
    pub hidden: Activation,
    pub output: Activation,
}

impl NetParams {
    /// Xavier-normal weights, `N(0, 2 / (in + out))`, and zero biases.
    ///
    /// `dims` lists every layer width including input and output, so
    /// `[2, 128, 128, 2]` yields three layers.
    pub fn init(rng: &mut Rng, dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("bad layer dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = rng.randn(&[fan_out, fan_in]).map(|v| v * std);
                Layer {
                    weight,
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        NetParams::from_layers(layers, hidden, output)
    }

    pub fn from_layers(layers: Vec<Layer>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        let mut prev: Option<usize> = None;
        for l in &layers {
            let (out, inp) = l.weight.dims2("layer")?;
            if l.bias.shape() != [out] {
                return Err(Error::shape("layer", l.weight.shape(), l.bias.shape()));
            }
            if let Some(p) = prev {
                if p != inp {
                    return Err(Error::shape("layer chain", &[p], &[inp]));
                }
            }
            prev = Some(out);
        }
        Ok(NetParams { layers, hidden, output })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.shape()[0]
    }

    pub fn num_tensors(&self) -> usize {
        2 * self.layers.len()
    }

    /// Parameters in flat order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Records every parameter as a tape leaf, in [`NetParams::tensors`] order.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Forward pass using the given parameter nodes, which need not be leaves.
    pub fn forward_with(&self, tape: &mut Tape, params: &[Var], input: Var) -> Result<Var> {
        let width = tape.shape(input).get(1).copied();
        if tape.shape(input).len() != 2 || width != Some(self.in_dim()) {
            return Err(Error::shape("mlp_forward", tape.shape(input), &[0, self.in_dim()]));
        }
        if params.len() != self.num_tensors() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter nodes, got {}",
                self.num_tensors(),
                params.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = input;
        for (i, pair) in params.chunks(2).enumerate() {
            h = tape.linear(h, pair[0], pair[1])?;
            let act = if i == last { self.output } else { self.hidden };
            h = act.apply(tape, h)?;
        }
        Ok(h)
    }

    /// Binds the parameters and runs the forward pass.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<(Var, Vec<Var>)> {
        let params = self.bind(tape)?;
        let out = self.forward_with(tape, &params, input)?;
        Ok((out, params))
    }

    /// Gradient-free evaluation on a `[batch, in]` matrix.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<_>>()?;
        let x = tape.constant(input.clone())?;
        let out = self.forward_with(&mut tape, &params, x)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_zero() {
        let layers = vec![
            Layer { weight: Tensor::zeros(&[4, 3]), bias: Tensor::zeros(&[4]) },
            Layer { weight: Tensor::zeros(&[2, 4]), bias: Tensor::zeros(&[2]) },
        ];
        let net = NetParams::from_layers(layers, Activation::Tanh, Activation::Identity).unwrap();
        let x = Rng::new(0).randn(&[5, 3]);
        assert_eq!(net.predict(&x).unwrap(), Tensor::zeros(&[5, 2]));
    }

    #[test]
    fn identity_layer_returns_input() {
        let layers = vec![Layer { weight: Tensor::identity(3), bias: Tensor::zeros(&[3]) }];
        let net = NetParams::from_layers(layers, Activation::Tanh, Activation::Identity).unwrap();
        let x = Rng::new(1).randn(&[4, 3]);
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn matches_hand_rolled_loops() {
        let mut rng = Rng::new(7);
        let mut net = NetParams::init(&mut rng, &[3, 5, 4, 2], Activation::Tanh, Activation::Identity).unwrap();
        for l in &mut net.layers {
            l.bias = rng.randn(l.bias.shape());
        }
        let x = rng.randn(&[6, 3]);
        let got = net.predict(&x).unwrap();
        for n in 0..6 {
            let mut h: Vec<f64> = x.row(n).to_vec();
            for (li, l) in net.layers.iter().enumerate() {
                let (out, inp) = (l.weight.shape()[0], l.weight.shape()[1]);
                let mut next = vec![0.0; out];
                for o in 0..out {
                    let mut acc = l.bias.data()[o];
                    for i in 0..inp {
                        acc += l.weight.get2(o, i) * h[i];
                    }
                    next[o] = if li + 1 < net.layers.len() { acc.tanh() } else { acc };
                }
                h = next;
            }
            for j in 0..2 {
                assert!((got.get2(n, j) - h[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = NetParams::init(&mut Rng::new(3), &[2, 128, 128, 2], Activation::Tanh, Activation::Identity).unwrap();
        let shapes: Vec<_> = a.layers.iter().map(|l| l.weight.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![128, 2], vec![128, 128], vec![2, 128]]);
        assert!(a.layers.iter().all(|l| l.bias.data().iter().all(|&b| b == 0.0)));
        let b = NetParams::init(&mut Rng::new(3), &[2, 128, 128, 2], Activation::Tanh, Activation::Identity).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_variance_is_xavier() {
        let net = NetParams::init(&mut Rng::new(11), &[128, 128, 1], Activation::Tanh, Activation::Identity).unwrap();
        let w = &net.layers[0].weight;
        let mean = w.mean();
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let want = 2.0 / 256.0;
        assert!((var - want).abs() < 0.2 * want, "var {var} want {want}");
    }

    #[test]
    fn width_mismatch_is_error() {
        let net = NetParams::init(&mut Rng::new(0), &[3, 4, 1], Activation::Tanh, Activation::Identity).unwrap();
        assert!(matches!(
            net.predict(&Tensor::zeros(&[2, 2])),
            Err(Error::ShapeMismatch { op: "mlp_forward", .. })
        ));
        assert!(NetParams::init(&mut Rng::new(0), &[3], Activation::Tanh, Activation::Identity).is_err());
    }
}
