//! Vanilla and unrolled GAN. Both share one step: with zero unrolling steps
//! the unrolled trainer builds exactly the vanilla computation.

use super::{check_grads, drive, expect_method, Method, Networks, Streams, TrainedModel, TrainerConfig};
use crate::error::Result;
use crate::losses::{enhanced_generator_loss, gan_objective};
use crate::ndtape::{Tape, Tensor, Var};
use crate::synth::MixtureSpec;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct GanGrads {
    /// Descent direction for the discriminator (negated ascent gradient).
    pub disc: Vec<Tensor>,
    pub gen: Vec<Tensor>,
    pub losses: Vec<f64>,
}

/// Generator input (latent plus extra noise) and a data batch.
pub(crate) fn draw_gan_batch(spec: &MixtureSpec, cfg: &TrainerConfig, s: &mut Streams) -> (Tensor, Tensor) {
    let n = cfg.batch_size;
    let z = s.latent.randn(&[n, cfg.generator_input_dim()]);
    let x = spec.sample(&mut s.data, n);
    (z, x)
}

/// Gradients of one step with `unroll` differentiated inner discriminator
/// updates. The surrogate parameters live only on the tape, so `nets` is
/// left untouched.
pub(crate) fn gan_grads(cfg: &TrainerConfig, nets: &Networks, z: &Tensor, x: &Tensor, unroll: usize) -> Result<GanGrads> {
    let (gen, disc) = (&nets.generator, &nets.discriminator);
    let mut tape = Tape::new();
    let gp = gen.bind(&mut tape)?;
    let dp = disc.bind(&mut tape)?;
    let z = tape.constant(z.clone())?;
    let x = tape.constant(x.clone())?;
    let fake = gen.forward_with(&mut tape, &gp, z)?;
    let mut d_fake = disc.forward_with(&mut tape, &dp, fake)?;
    let mut d_real = disc.forward_with(&mut tape, &dp, x)?;
    let objective = gan_objective(&mut tape, d_fake, d_real)?;
    let mut ascent = tape.grad(objective.var, &dp)?;
    let disc_grads = ascent.iter().map(|&g| tape.value(g).map(|v| -v)).collect();

    let mut params: Vec<Var> = dp.clone();
    for j in 0..unroll {
        params = params
            .iter()
            .zip(&ascent)
            .map(|(&w, &g)| {
                let s = tape.scale(g, cfg.unroll_lr)?;
                tape.add(w, s)
            })
            .collect::<Result<_>>()?;
        d_fake = disc.forward_with(&mut tape, &params, fake)?;
        d_real = disc.forward_with(&mut tape, &params, x)?;
        if j + 1 < unroll {
            let obj = gan_objective(&mut tape, d_fake, d_real)?;
            ascent = tape.grad(obj.var, &params)?;
        }
    }

    let gen_loss = if cfg.enhanced_gen_loss {
        let realness = tape.neg(d_fake)?;
        enhanced_generator_loss(&mut tape, realness)?.var
    } else if unroll == 0 {
        objective.var
    } else {
        gan_objective(&mut tape, d_fake, d_real)?.var
    };
    let gen_grads = tape.backward(gen_loss, &gp)?;
    Ok(GanGrads {
        disc: disc_grads,
        gen: gen_grads,
        losses: vec![objective.value(&tape), tape.value(gen_loss).item()?],
    })
}

fn train_adversarial(spec: &MixtureSpec, cfg: &TrainerConfig, unroll: usize) -> Result<TrainedModel> {
    let mut nets = Networks::init(spec, cfg)?;
    let mut streams = Streams::new(cfg.seed, "");
    let trace = drive(cfg.steps, cfg.trace_every, &mut nets, &["gan_objective", "gen_loss"], |nets, _| {
        let (z, x) = draw_gan_batch(spec, cfg, &mut streams);
        let g = gan_grads(cfg, nets, &z, &x, unroll)?;
        check_grads(&[&g.disc, &g.gen])?;
        nets.disc_opt.step_net(&mut nets.discriminator, &g.disc)?;
        nets.gen_opt.step_net(&mut nets.generator, &g.gen)?;
        Ok(g.losses)
    })?;
    Ok(nets.into_model(cfg.clone(), trace))
}

/// Alternating discriminator ascent and generator descent on the GAN
/// objective, or on the non-saturating loss when `enhanced_gen_loss` is set.
pub fn train_gan(spec: &MixtureSpec, cfg: &TrainerConfig) -> Result<TrainedModel> {
    expect_method(cfg, &[Method::Gan])?;
    train_adversarial(spec, cfg, 0)
}

/// Unrolled GAN: the generator loss is evaluated after `unroll_steps` plain
/// SGD ascent steps of the discriminator, differentiated through. The
/// persistent discriminator takes one ordinary step.
pub fn train_unrolled(spec: &MixtureSpec, cfg: &TrainerConfig) -> Result<TrainedModel> {
    expect_method(cfg, &[Method::Unrolled])?;
    train_adversarial(spec, cfg, cfg.unroll_steps)
}
