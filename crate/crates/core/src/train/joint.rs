//! Trainers with a reconstructor and a joint `(z, x)` discriminator:
//! VEEGAN, its data-autoencoder variant, and ALI.

use super::{check_grads, drive, expect_method, Method, Networks, PretrainMode, Streams, TrainedModel, TrainerConfig};
use crate::error::{Error, Result};
use crate::losses::{dae_variant_loss, joint_lr_loss, reconstruction_loss, veegan_generator_loss_with};
use crate::ndtape::{Rng, Tape, Tensor, Var};
use crate::synth::MixtureSpec;

/// One step's worth of random draws.
#[derive(Clone, Debug)]
pub(crate) struct JointBatch {
    pub z: Tensor,
    pub e: Tensor,
    pub x: Tensor,
    pub eps: Tensor,
}

impl JointBatch {
    pub fn draw(spec: &MixtureSpec, cfg: &TrainerConfig, s: &mut Streams) -> Self {
        let n = cfg.batch_size;
        JointBatch {
            z: s.latent.randn(&[n, cfg.latent_dim]),
            e: s.extra.randn(&[n, cfg.extra_noise_dims]),
            x: spec.sample(&mut s.data, n),
            eps: s.recon_noise.randn(&[n, cfg.latent_dim]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct JointGrads {
    pub disc: Vec<Tensor>,
    pub rec: Vec<Tensor>,
    /// Empty when the generator update is skipped.
    pub gen: Vec<Tensor>,
    pub losses: Vec<f64>,
}

/// Appends the extra noise columns to a latent code.
pub(crate) fn gen_input(tape: &mut Tape, code: Var, e: &Tensor) -> Result<Var> {
    if e.shape()[1] == 0 {
        return Ok(code);
    }
    let e = tape.constant(e.clone())?;
    tape.concat_cols(code, e)
}

/// Gradients of all three networks at the current parameters.
pub(crate) fn joint_grads(cfg: &TrainerConfig, nets: &Networks, b: &JointBatch, with_gen: bool) -> Result<JointGrads> {
    let (rec, _) = nets
        .reconstructor
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("joint trainer needs a reconstructor".into()))?;
    let (gen, disc) = (&nets.generator, &nets.discriminator);
    let mut tape = Tape::new();
    let gp = gen.bind(&mut tape)?;
    let fp = rec.bind(&mut tape)?;
    let dp = disc.bind(&mut tape)?;
    let z = tape.constant(b.z.clone())?;
    let x = tape.constant(b.x.clone())?;

    let gin = gen_input(&mut tape, z, &b.e)?;
    let x_g = gen.forward_with(&mut tape, &gp, gin)?;
    let f_x = rec.forward_with(&mut tape, &fp, x)?;
    let z_g = if cfg.reconstructor_noise > 0.0 {
        let noise = tape.constant(b.eps.map(|v| v * cfg.reconstructor_noise))?;
        tape.add(f_x, noise)?
    } else {
        f_x
    };
    let gen_pairs = tape.concat_cols(z, x_g)?;
    let data_pairs = tape.concat_cols(z_g, x)?;
    let d_gen = disc.forward_with(&mut tape, &dp, gen_pairs)?;
    let d_data = disc.forward_with(&mut tape, &dp, data_pairs)?;

    let l_disc = joint_lr_loss(&mut tape, d_gen, d_data)?;
    let g_disc = tape.backward(l_disc.var, &dp)?;

    if cfg.method == Method::Ali {
        let adv = if cfg.enhanced_gen_loss {
            // Swap the labels instead of negating the loss.
            let a = tape.neg(d_gen)?;
            let c = tape.neg(d_data)?;
            joint_lr_loss(&mut tape, a, c)?.var
        } else {
            tape.neg(l_disc.var)?
        };
        let adv_value = tape.value(adv).item()?;
        let mut wrt = fp.clone();
        wrt.extend_from_slice(&gp);
        let mut g = tape.backward(adv, &wrt)?;
        let g_gen = if with_gen { g.split_off(fp.len()) } else { Vec::new() };
        g.truncate(fp.len());
        return Ok(JointGrads {
            disc: g_disc,
            rec: g,
            gen: g_gen,
            losses: vec![l_disc.value(&tape), adv_value],
        });
    }

    let recon = if cfg.method == Method::VeeganDae {
        let code = gen_input(&mut tape, f_x, &b.e)?;
        let x_hat = gen.forward_with(&mut tape, &gp, code)?;
        dae_variant_loss(&mut tape, x, x_hat, cfg.lambda)?
    } else {
        let z_hat = rec.forward_with(&mut tape, &fp, x_g)?;
        reconstruction_loss(&mut tape, z, z_hat)?
    };
    let g_rec = tape.backward(recon.var, &fp)?;
    let (g_gen, gen_value) = if with_gen {
        let l_gen = veegan_generator_loss_with(&mut tape, d_gen, recon, cfg.generator_disc_term)?;
        (tape.backward(l_gen.var, &gp)?, l_gen.value(&tape))
    } else {
        (Vec::new(), f64::NAN)
    };
    let mut losses = vec![l_disc.value(&tape), recon.value(&tape)];
    if with_gen {
        losses.push(gen_value);
    }
    Ok(JointGrads {
        disc: g_disc,
        rec: g_rec,
        gen: g_gen,
        losses,
    })
}

/// Applies the updates in the order discriminator, reconstructor, generator.
/// Nothing is modified unless every gradient is finite.
pub(crate) fn apply_joint(nets: &mut Networks, g: &JointGrads) -> Result<()> {
    check_grads(&[&g.disc, &g.rec, &g.gen])?;
    nets.disc_opt.step_net(&mut nets.discriminator, &g.disc)?;
    let (rec, rec_opt) = nets.reconstructor.as_mut().expect("checked by joint_grads");
    rec_opt.step_net(rec, &g.rec)?;
    if !g.gen.is_empty() {
        nets.gen_opt.step_net(&mut nets.generator, &g.gen)?;
    }
    Ok(())
}

fn train_joint(spec: &MixtureSpec, cfg: &TrainerConfig) -> Result<TrainedModel> {
    let mut nets = Networks::init(spec, cfg)?;
    if cfg.method != Method::Ali {
        pretrain_reconstructor(spec, cfg, &mut nets)?;
    }
    let mut streams = Streams::new(cfg.seed, "");
    let columns: &[&str] = if cfg.method == Method::Ali {
        &["disc_loss", "gen_loss"]
    } else {
        &["disc_loss", "recon_loss", "gen_loss"]
    };
    let trace = drive(cfg.steps, cfg.trace_every, &mut nets, columns, |nets, _| {
        let batch = JointBatch::draw(spec, cfg, &mut streams);
        let g = joint_grads(cfg, nets, &batch, true)?;
        apply_joint(nets, &g)?;
        Ok(g.losses)
    })?;
    Ok(nets.into_model(cfg.clone(), trace))
}

/// VEEGAN training, or the data-autoencoder variant when
/// `cfg.method` is `VEEGAN_DAE`. Runs reconstructor pretraining first.
pub fn train_veegan(spec: &MixtureSpec, cfg: &TrainerConfig) -> Result<TrainedModel> {
    expect_method(cfg, &[Method::Veegan, Method::VeeganDae])?;
    train_joint(spec, cfg)
}

/// ALI: the discriminator minimizes the joint logistic loss and the
/// generator and reconstructor jointly maximize it.
pub fn train_ali(spec: &MixtureSpec, cfg: &TrainerConfig) -> Result<TrainedModel> {
    expect_method(cfg, &[Method::Ali])?;
    train_joint(spec, cfg)
}

/// Fixed pool of data points paired with `N(0, I)` targets.
pub(crate) struct PriorPool {
    pub x: Tensor,
    pub targets: Tensor,
}

impl PriorPool {
    pub const SIZE: usize = 4096;

    pub fn new(spec: &MixtureSpec, cfg: &TrainerConfig) -> Self {
        let root = Rng::new(cfg.seed);
        let x = spec.sample(&mut root.split_named("pretrain/pool_data"), Self::SIZE);
        let targets = root.split_named("pretrain/pool_targets").randn(&[Self::SIZE, cfg.latent_dim]);
        PriorPool { x, targets }
    }

    fn gather(t: &Tensor, idx: &[usize]) -> Tensor {
        let w = t.shape()[1];
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            data.extend_from_slice(&t.data()[i * w..(i + 1) * w]);
        }
        Tensor::new(vec![idx.len(), w], data).expect("row gather keeps the width")
    }

    /// `‖F(x) − target‖²` per sample and latent dimension over the whole pool.
    #[cfg(test)]
    pub fn loss(&self, rec: &crate::nn::NetParams) -> Result<f64> {
        let pred = rec.predict(&self.x)?;
        let d = pred.zip_map(&self.targets, "pool_loss", |a, b| (a - b) * (a - b))?;
        Ok(d.mean())
    }
}

/// Pretrains the reconstructor for `cfg.pretrain_steps` steps.
///
/// [`PretrainMode::WarmUp`] runs the discriminator and reconstructor updates
/// of the main loop without touching the generator.
/// [`PretrainMode::RegressToPrior`] regresses `F(x)` toward a fixed pool of
/// standard normal draws paired with data points. Random draws come from
/// dedicated streams, so the main loop sees the same samples either way.
pub fn pretrain_reconstructor(spec: &MixtureSpec, cfg: &TrainerConfig, nets: &mut Networks) -> Result<()> {
    if cfg.pretrain_steps == 0 {
        return Ok(());
    }
    match cfg.pretrain_mode {
        PretrainMode::WarmUp => {
            let mut streams = Streams::new(cfg.seed, "pretrain/");
            drive(cfg.pretrain_steps, 0, nets, &[], |nets, _| {
                let batch = JointBatch::draw(spec, cfg, &mut streams);
                let g = joint_grads(cfg, nets, &batch, false)?;
                apply_joint(nets, &g)?;
                Ok(g.losses)
            })?;
        }
        PretrainMode::RegressToPrior => {
            let pool = PriorPool::new(spec, cfg);
            let mut pick = Rng::new(cfg.seed).split_named("pretrain/pick");
            drive(cfg.pretrain_steps, 0, nets, &[], |nets, _| {
                let idx: Vec<usize> = (0..cfg.batch_size).map(|_| pick.below(PriorPool::SIZE)).collect();
                let (rec, rec_opt) = nets
                    .reconstructor
                    .as_mut()
                    .ok_or_else(|| Error::InvalidArgument("pretraining needs a reconstructor".into()))?;
                let mut tape = Tape::new();
                let fp = rec.bind(&mut tape)?;
                let x = tape.constant(PriorPool::gather(&pool.x, &idx))?;
                let t = tape.constant(PriorPool::gather(&pool.targets, &idx))?;
                let f_x = rec.forward_with(&mut tape, &fp, x)?;
                let l = reconstruction_loss(&mut tape, t, f_x)?;
                let g = tape.backward(l.var, &fp)?;
                check_grads(&[&g])?;
                rec_opt.step_net(rec, &g)?;
                Ok(vec![l.value(&tape)])
            })?;
        }
    }
    Ok(())
}
