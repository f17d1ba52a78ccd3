//! Finite-difference checks of every tape primitive and of two composed
//! network losses.

use crate::error::Result;
use crate::losses::{joint_lr_loss, reconstruction_loss, veegan_generator_loss};
use crate::ndtape::{grad_check, Rng, Tape, Tensor, Var};
use crate::nn::{Activation, NetParams};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckResult {
    pub name: String,
    pub rel_err: f64,
}

const STEP: f64 = 1e-6;

/// Reduces any node to a scalar with fixed random weights, so every output
/// entry contributes to the checked gradient.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let w = Rng::new(seed).randn(tape.shape(v));
    let w = tape.constant(w)?;
    let p = tape.mul(v, w)?;
    tape.sum(p)
}

type Probe = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;

/// Probe of `op(x)` reduced to a scalar.
fn unary(op: impl Fn(&mut Tape, Var) -> Result<Var> + 'static) -> Probe {
    Box::new(move |t, x| {
        let y = op(t, x)?;
        weighted_sum(t, y, 7)
    })
}

/// Probe of `op(x, c)` with `c` held constant.
fn with_const(c: &Tensor, op: impl Fn(&mut Tape, Var, Var) -> Result<Var> + 'static) -> Probe {
    let c = c.clone();
    unary(move |t, x| {
        let cv = t.constant(c.clone())?;
        op(t, x, cv)
    })
}

fn primitives(rng: &mut Rng) -> Vec<(&'static str, Tensor, Probe)> {
    let a = rng.randn(&[3, 4]);
    let b = rng.randn(&[4, 5]);
    let bt = rng.randn(&[5, 4]);
    let same = rng.randn(&[3, 4]);
    let row = rng.randn(&[4]);
    let wide = rng.randn(&[3, 2]);
    // Keep probes away from the ReLU kink.
    let away = rng.randn(&[3, 4]).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });

    vec![
        ("matmul/lhs", a.clone(), with_const(&b, |t, x, c| t.matmul(x, c))),
        ("matmul/rhs", b.clone(), with_const(&a, |t, x, c| t.matmul(c, x))),
        ("matmul_t/rhs_transposed", a.clone(), with_const(&bt, |t, x, c| t.matmul_t(x, c, false, true))),
        ("matmul_t/both_transposed", b.clone(), with_const(&a, |t, x, c| t.matmul_t(x, c, true, true))),
        ("matmul_t/gram", a.clone(), unary(|t, x| t.matmul_t(x, x, true, false))),
        ("add", a.clone(), with_const(&same, |t, x, c| t.add(x, c))),
        ("add/broadcast_rhs", row.clone(), with_const(&a, |t, x, c| t.add(c, x))),
        ("sub", a.clone(), with_const(&same, |t, x, c| t.sub(c, x))),
        ("sub/broadcast_rhs", row.clone(), with_const(&a, |t, x, c| t.sub(c, x))),
        ("mul", a.clone(), with_const(&same, |t, x, c| t.mul(x, c))),
        ("mul/self", a.clone(), unary(|t, x| t.mul(x, x))),
        ("mul/broadcast_rhs", row.clone(), with_const(&same, |t, x, c| t.mul(c, x))),
        ("neg", a.clone(), unary(|t, x| t.neg(x))),
        ("scale", a.clone(), unary(|t, x| t.scale(x, -2.5))),
        ("add_scalar", a.clone(), unary(|t, x| t.add_scalar(x, 0.3))),
        ("tanh", a.clone(), unary(|t, x| t.tanh(x))),
        ("relu", away.clone(), unary(|t, x| t.relu(x))),
        ("leaky_relu", away, unary(|t, x| t.leaky_relu(x, 0.2))),
        ("sigmoid", a.clone(), unary(|t, x| t.sigmoid(x))),
        ("log_sigmoid", a.clone(), unary(|t, x| t.log_sigmoid(x))),
        ("square", a.clone(), unary(|t, x| t.square(x))),
        ("sum", a.clone(), unary(|t, x| t.sum(x))),
        ("mean", a.clone(), unary(|t, x| t.mean(x))),
        ("squared_l2", a.clone(), with_const(&same, |t, x, c| t.squared_l2(x, c))),
        ("sum_leading", a.clone(), unary(|t, x| t.sum_leading(x))),
        ("broadcast_leading", row.clone(), unary(|t, x| t.broadcast_leading(x, 3))),
        ("concat_cols", a.clone(), with_const(&wide, |t, x, c| t.concat_cols(x, c))),
        ("concat_cols/rhs", wide, with_const(&same, |t, x, c| t.concat_cols(c, x))),
        ("slice_cols", a.clone(), unary(|t, x| t.slice_cols(x, 1, 2))),
        ("reshape", a.clone(), unary(|t, x| t.reshape(x, &[2, 6]))),
        (
            "linear",
            row,
            with_const(&same, |t, x, c| {
                let w = t.constant(Tensor::identity(4))?;
                t.linear(c, w, x)
            }),
        ),
        (
            "tanh/second_order",
            a.clone(),
            unary(|t, x| {
                let y = t.tanh(x)?;
                let s = weighted_sum(t, y, 3)?;
                let g = t.grad(s, &[x])?;
                t.square(g[0])
            }),
        ),
        (
            "sigmoid/second_order",
            a,
            unary(|t, x| {
                let y = t.sigmoid(x)?;
                let s = weighted_sum(t, y, 4)?;
                let g = t.grad(s, &[x])?;
                t.square(g[0])
            }),
        ),
    ]
}

/// Flattens all network parameters into one probe vector and back.
fn flat(nets: &[&NetParams]) -> Tensor {
    let data: Vec<f64> = nets.iter().flat_map(|n| n.tensors()).flat_map(|t| t.data().to_vec()).collect();
    Tensor::vector(data)
}

fn unflatten(tape: &mut Tape, x: Var, nets: &[&NetParams]) -> Result<Vec<Vec<Var>>> {
    let total = tape.shape(x)[0];
    let row = tape.reshape(x, &[1, total])?;
    let mut off = 0;
    let mut out = Vec::new();
    for n in nets {
        let mut params = Vec::new();
        for t in n.tensors() {
            let piece = tape.slice_cols(row, off, t.len())?;
            params.push(tape.reshape(piece, t.shape())?);
            off += t.len();
        }
        out.push(params);
    }
    Ok(out)
}

fn composed(rng: &mut Rng) -> Result<Vec<(&'static str, Tensor, Probe)>> {
    let g = NetParams::init(rng, &[3, 5, 2], Activation::Tanh, Activation::Identity)?;
    let f = NetParams::init(rng, &[2, 5, 2], Activation::Tanh, Activation::Identity)?;
    let d = NetParams::init(rng, &[4, 5, 1], Activation::leaky(), Activation::Identity)?;
    let z = rng.randn(&[6, 2]);
    let e = rng.randn(&[6, 1]);
    let x = rng.randn(&[6, 2]).map(|v| v * 2.0);

    let at = flat(&[&g, &f, &d]);
    let (g1, f1, d1) = (g.clone(), f.clone(), d.clone());
    let (z1, e1) = (z.clone(), e.clone());
    let veegan: Probe = Box::new(move |t: &mut Tape, p: Var| {
        let ps = unflatten(t, p, &[&g1, &f1, &d1])?;
        let z = t.constant(z1.clone())?;
        let e = t.constant(e1.clone())?;
        let gin = t.concat_cols(z, e)?;
        let x_g = g1.forward_with(t, &ps[0], gin)?;
        let z_hat = f1.forward_with(t, &ps[1], x_g)?;
        let pair = t.concat_cols(z, x_g)?;
        let dv = d1.forward_with(t, &ps[2], pair)?;
        let recon = reconstruction_loss(t, z, z_hat)?;
        Ok(veegan_generator_loss(t, dv, recon)?.var)
    });
    let discriminator: Probe = Box::new(move |t: &mut Tape, p: Var| {
        let ps = unflatten(t, p, &[&g, &f, &d])?;
        let zc = t.constant(z.clone())?;
        let ec = t.constant(e.clone())?;
        let xc = t.constant(x.clone())?;
        let gin = t.concat_cols(zc, ec)?;
        let x_g = g.forward_with(t, &ps[0], gin)?;
        let z_g = f.forward_with(t, &ps[1], xc)?;
        let gp = t.concat_cols(zc, x_g)?;
        let dp = t.concat_cols(z_g, xc)?;
        let a = d.forward_with(t, &ps[2], gp)?;
        let b = d.forward_with(t, &ps[2], dp)?;
        Ok(joint_lr_loss(t, a, b)?.var)
    });
    Ok(vec![("mlp/veegan_generator_loss", at.clone(), veegan), ("mlp/joint_lr_loss", at, discriminator)])
}

/// Runs every check with inputs drawn from `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<GradCheckResult>> {
    let mut rng = Rng::new(seed);
    let mut cases = primitives(&mut rng);
    cases.extend(composed(&mut rng)?);
    cases
        .into_iter()
        .map(|(name, at, f)| {
            Ok(GradCheckResult {
                name: name.to_string(),
                rel_err: grad_check(f, &at, STEP)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in run_suite(1).unwrap() {
            assert!(r.rel_err < 1e-4, "{}: {}", r.name, r.rel_err);
        }
    }
}
