//! Adversarial objectives as scalar-loss builders on a [`Tape`].
//!
//! Discriminator outputs are raw logits. Across the crate a large
//! discriminator output means "generated": at the optimum the joint
//! discriminator approximates `log q(x|z)p0(z) / p(z|x)p(x)` and the data
//! discriminator `log q(x) / p(x)`.

use crate::error::{Error, Result};
use crate::ndtape::{Tape, Var};

/// Which networks a loss may update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Routes {
    pub generator: bool,
    pub reconstructor: bool,
    pub discriminator: bool,
}

impl Routes {
    pub const GENERATOR: Routes = Routes { generator: true, reconstructor: false, discriminator: false };
    pub const RECONSTRUCTOR: Routes = Routes { generator: false, reconstructor: true, discriminator: false };
    pub const DISCRIMINATOR: Routes = Routes { generator: false, reconstructor: false, discriminator: true };

    pub fn union(self, other: Routes) -> Routes {
        Routes {
            generator: self.generator || other.generator,
            reconstructor: self.reconstructor || other.reconstructor,
            discriminator: self.discriminator || other.discriminator,
        }
    }
}

/// A scalar node together with the networks it is allowed to train.
#[derive(Clone, Copy, Debug)]
pub struct LossValue {
    pub var: Var,
    pub routes: Routes,
}

impl LossValue {
    pub fn value(&self, tape: &Tape) -> f64 {
        tape.value(self.var).data()[0]
    }
}

fn flat_batch(tape: &Tape, v: Var, op: &'static str) -> Result<usize> {
    let s = tape.shape(v);
    match *s {
        [n] | [n, 1] if n > 0 => Ok(n),
        _ => Err(Error::shape(op, s, &[0])),
    }
}

fn mean_log_sigmoid(tape: &mut Tape, v: Var, negate: bool) -> Result<Var> {
    let v = if negate { tape.neg(v)? } else { v };
    let ls = tape.log_sigmoid(v)?;
    tape.mean(ls)
}

/// `mean log σ(d_fake) + mean log(1 - σ(d_real))`.
///
/// The discriminator ascends this value and the generator descends it.
pub fn gan_objective(tape: &mut Tape, d_on_fake: Var, d_on_real: Var) -> Result<LossValue> {
    flat_batch(tape, d_on_fake, "gan_objective")?;
    flat_batch(tape, d_on_real, "gan_objective")?;
    let a = mean_log_sigmoid(tape, d_on_fake, false)?;
    // log(1 - σ(t)) = log σ(-t)
    let b = mean_log_sigmoid(tape, d_on_real, true)?;
    let var = tape.add(a, b)?;
    Ok(LossValue { var, routes: Routes::GENERATOR.union(Routes::DISCRIMINATOR) })
}

/// Non-saturating generator loss `mean -log σ(t)`, minimized over the generator.
///
/// `t` must be the logit for "this sample is real". With the crate's
/// discriminator convention that is the negated discriminator output.
pub fn enhanced_generator_loss(tape: &mut Tape, realness_logits: Var) -> Result<LossValue> {
    flat_batch(tape, realness_logits, "enhanced_generator_loss")?;
    let m = mean_log_sigmoid(tape, realness_logits, false)?;
    let var = tape.neg(m)?;
    Ok(LossValue { var, routes: Routes::GENERATOR })
}

/// Logistic loss of the joint discriminator,
/// `-mean log σ(D(z, x_g)) - mean log(1 - σ(D(z_g, x)))`.
///
/// `d_gen_pairs` is evaluated on `(z ~ p0, x_g ~ q(x|z))` and `d_data_pairs`
/// on `(z_g ~ p(z|x), x ~ p(x))`. Minimized over the discriminator only.
pub fn joint_lr_loss(tape: &mut Tape, d_gen_pairs: Var, d_data_pairs: Var) -> Result<LossValue> {
    flat_batch(tape, d_gen_pairs, "joint_lr_loss")?;
    flat_batch(tape, d_data_pairs, "joint_lr_loss")?;
    let a = mean_log_sigmoid(tape, d_gen_pairs, false)?;
    let b = mean_log_sigmoid(tape, d_data_pairs, true)?;
    let s = tape.add(a, b)?;
    let var = tape.neg(s)?;
    Ok(LossValue { var, routes: Routes::DISCRIMINATOR })
}

/// `sum ‖z - z_hat‖² / (n K)`: squared distance per sample and per latent
/// dimension. Trains both generator and reconstructor.
pub fn reconstruction_loss(tape: &mut Tape, z: Var, z_hat: Var) -> Result<LossValue> {
    let shape = tape.shape(z).to_vec();
    if shape.len() != 2 || tape.shape(z_hat) != shape.as_slice() {
        return Err(Error::shape("reconstruction_loss", &shape, tape.shape(z_hat)));
    }
    let count = (shape[0] * shape[1]).max(1) as f64;
    let sq = tape.squared_l2(z, z_hat)?;
    let var = tape.scale(sq, 1.0 / count)?;
    Ok(LossValue { var, routes: Routes::GENERATOR.union(Routes::RECONSTRUCTOR) })
}

/// How the discriminator enters the generator's loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorDiscTerm {
    /// `mean D(z, x_g)`, the raw discriminator output.
    #[default]
    Raw,
    /// `-mean log σ(-D(z, x_g))`: the non-saturating form.
    LogSigmoid,
}

/// `mean D(z, x_g) + recon`, minimized over the generator. The
/// reconstructor is trained by `recon` alone.
pub fn veegan_generator_loss(tape: &mut Tape, d_gen_pairs: Var, recon: LossValue) -> Result<LossValue> {
    veegan_generator_loss_with(tape, d_gen_pairs, recon, GeneratorDiscTerm::Raw)
}

pub fn veegan_generator_loss_with(
    tape: &mut Tape,
    d_gen_pairs: Var,
    recon: LossValue,
    term: GeneratorDiscTerm,
) -> Result<LossValue> {
    flat_batch(tape, d_gen_pairs, "veegan_generator_loss")?;
    let adv = match term {
        GeneratorDiscTerm::Raw => tape.mean(d_gen_pairs)?,
        GeneratorDiscTerm::LogSigmoid => {
            let m = mean_log_sigmoid(tape, d_gen_pairs, true)?;
            tape.neg(m)?
        }
    };
    let var = tape.add(adv, recon.var)?;
    Ok(LossValue { var, routes: Routes::GENERATOR })
}

/// `lambda · mean_i ‖x_i - x_hat_i‖²`, the data-space autoencoder penalty
/// that replaces the latent reconstruction term in the DAE variant.
pub fn dae_variant_loss(tape: &mut Tape, x: Var, x_hat: Var, lambda: f64) -> Result<LossValue> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let shape = tape.shape(x).to_vec();
    if shape.len() != 2 || tape.shape(x_hat) != shape.as_slice() {
        return Err(Error::shape("dae_variant_loss", &shape, tape.shape(x_hat)));
    }
    let sq = tape.squared_l2(x, x_hat)?;
    let var = tape.scale(sq, lambda / shape[0].max(1) as f64)?;
    Ok(LossValue { var, routes: Routes::GENERATOR.union(Routes::RECONSTRUCTOR) })
}
