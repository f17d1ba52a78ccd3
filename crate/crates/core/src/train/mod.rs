//! Training loops: VEEGAN (and its data-autoencoder variant), vanilla GAN,
//! ALI and unrolled GAN.
//!
//! Every loop computes all gradients from the parameters as of the start of
//! the step and then applies the updates in the order discriminator,
//! reconstructor, generator. Each sampling site draws from its own named
//! sub-stream of the run seed.

mod adversarial;
mod config;
mod joint;

pub use adversarial::{train_gan, train_unrolled};
pub use config::{Method, PretrainMode, TrainerConfig};
pub use joint::{pretrain_reconstructor, train_ali, train_veegan};

use crate::error::{Error, Result};
use crate::ndtape::{Rng, Tensor};
use crate::nn::{encode_nets, NetParams, OptState};
use crate::synth::MixtureSpec;

/// Per-step loss scalars, recorded every `trace_every` steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (step, vals) in &self.rows {
            out.push_str(&step.to_string());
            for v in vals {
                out.push_str(&format!(",{v:.10e}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub generator: NetParams,
    /// Present for ALI and the VEEGAN variants.
    pub reconstructor: Option<NetParams>,
    pub discriminator: NetParams,
    pub config: TrainerConfig,
    pub trace: LossTrace,
}

impl TrainedModel {
    /// Draws `n` generator samples, `[n, dim]`.
    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<Tensor> {
        let input = rng.randn(&[n, self.config.generator_input_dim()]);
        self.generator.predict(&input)
    }

    /// Generator, reconstructor (if any) and discriminator as one blob.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut nets: Vec<(&NetParams, Option<&OptState>)> = vec![(&self.generator, None), (&self.discriminator, None)];
        if let Some(r) = &self.reconstructor {
            nets.push((r, None));
        }
        encode_nets(&nets)
    }

    pub fn from_bytes(blob: &[u8], config: TrainerConfig) -> Result<Self> {
        let mut nets = crate::nn::decode_nets(blob)?.into_iter().map(|(n, _)| n);
        let generator = nets.next().ok_or_else(|| Error::CorruptSnapshot("missing generator".into()))?;
        let discriminator = nets.next().ok_or_else(|| Error::CorruptSnapshot("missing discriminator".into()))?;
        let reconstructor = nets.next();
        Ok(TrainedModel {
            generator,
            reconstructor,
            discriminator,
            config,
            trace: LossTrace::default(),
        })
    }
}

/// All networks of one run with their optimizer states.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub generator: NetParams,
    pub gen_opt: OptState,
    pub reconstructor: Option<(NetParams, OptState)>,
    pub discriminator: NetParams,
    pub disc_opt: OptState,
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

impl Networks {
    pub fn init(spec: &MixtureSpec, cfg: &TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(cfg.seed);
        let data_dim = spec.dim();
        let k = cfg.latent_dim;
        let generator = NetParams::init(
            &mut root.split_named("init/generator"),
            &dims(cfg.generator_input_dim(), &cfg.gen_hidden, data_dim),
            cfg.gen_activation,
            crate::nn::Activation::Identity,
        )?;
        let reconstructor = if cfg.method.has_reconstructor() {
            let net = NetParams::init(
                &mut root.split_named("init/reconstructor"),
                &dims(data_dim, &cfg.rec_hidden, k),
                cfg.rec_activation,
                crate::nn::Activation::Identity,
            )?;
            let opt = OptState::for_net(cfg.rec_opt, &net);
            Some((net, opt))
        } else {
            None
        };
        let disc_in = if cfg.method.has_reconstructor() { k + data_dim } else { data_dim };
        let discriminator = NetParams::init(
            &mut root.split_named("init/discriminator"),
            &dims(disc_in, &cfg.disc_hidden, 1),
            cfg.disc_activation,
            crate::nn::Activation::Identity,
        )?;
        Ok(Networks {
            gen_opt: OptState::for_net(cfg.gen_opt, &generator),
            generator,
            reconstructor,
            disc_opt: OptState::for_net(cfg.disc_opt, &discriminator),
            discriminator,
        })
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut nets = vec![
            (&self.generator, Some(&self.gen_opt)),
            (&self.discriminator, Some(&self.disc_opt)),
        ];
        if let Some((r, o)) = &self.reconstructor {
            nets.push((r, Some(o)));
        }
        encode_nets(&nets)
    }

    pub(crate) fn into_model(self, config: TrainerConfig, trace: LossTrace) -> TrainedModel {
        TrainedModel {
            generator: self.generator,
            reconstructor: self.reconstructor.map(|(r, _)| r),
            discriminator: self.discriminator,
            config,
            trace,
        }
    }
}

/// Independent random streams of one run.
pub(crate) struct Streams {
    pub latent: Rng,
    pub extra: Rng,
    pub data: Rng,
    pub recon_noise: Rng,
}

impl Streams {
    pub fn new(seed: u64, prefix: &str) -> Self {
        let root = Rng::new(seed);
        Streams {
            latent: root.split_named(&format!("{prefix}latent")),
            extra: root.split_named(&format!("{prefix}extra_noise")),
            data: root.split_named(&format!("{prefix}data")),
            recon_noise: root.split_named(&format!("{prefix}recon_noise")),
        }
    }
}

pub(crate) fn check_grads(groups: &[&[Tensor]]) -> Result<()> {
    for g in groups {
        for (i, t) in g.iter().enumerate() {
            if !t.all_finite() {
                return Err(Error::NonFiniteGradient { index: i });
            }
        }
    }
    Ok(())
}

/// Runs `steps` iterations of `step`, recording traces and turning any
/// numeric failure into [`Error::Diverged`] carrying the last good state.
pub(crate) fn drive<F>(
    steps: usize,
    trace_every: usize,
    nets: &mut Networks,
    columns: &[&str],
    mut step: F,
) -> Result<LossTrace>
where
    F: FnMut(&mut Networks, usize) -> Result<Vec<f64>>,
{
    let mut trace = LossTrace {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows: Vec::new(),
    };
    for i in 0..steps {
        let last_good = nets.clone();
        let losses = match step(nets, i) {
            Ok(l) if l.iter().all(|v| v.is_finite()) => l,
            Ok(_) => return Err(diverged(i, "non-finite loss".into(), &last_good)),
            Err(e @ (Error::NonFinite { .. } | Error::NonFiniteGradient { .. })) => {
                return Err(diverged(i, e.to_string(), &last_good))
            }
            Err(e) => return Err(e),
        };
        if i + 1 == steps || (trace_every > 0 && i % trace_every == 0) {
            trace.rows.push((i, losses));
        }
    }
    Ok(trace)
}

fn diverged(step: usize, reason: String, nets: &Networks) -> Error {
    Error::Diverged {
        step,
        reason,
        last_good: Some(nets.to_bytes()),
    }
}

/// Trains with the method named in `cfg`.
pub fn train(spec: &MixtureSpec, cfg: &TrainerConfig) -> Result<TrainedModel> {
    match cfg.method {
        Method::Gan => train_gan(spec, cfg),
        Method::Unrolled => train_unrolled(spec, cfg),
        Method::Ali => train_ali(spec, cfg),
        Method::Veegan | Method::VeeganDae => train_veegan(spec, cfg),
    }
}

pub(crate) fn expect_method(cfg: &TrainerConfig, allowed: &[Method]) -> Result<()> {
    if allowed.contains(&cfg.method) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "trainer for {:?} called with method {}",
            allowed,
            cfg.method.name()
        )))
    }
}
