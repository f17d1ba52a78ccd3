use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::GeneratorDiscTerm;
use crate::nn::{Activation, OptConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Gan,
    Ali,
    Unrolled,
    Veegan,
    VeeganDae,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gan, Method::Ali, Method::Unrolled, Method::Veegan, Method::VeeganDae];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gan => "GAN",
            Method::Ali => "ALI",
            Method::Unrolled => "UNROLLED",
            Method::Veegan => "VEEGAN",
            Method::VeeganDae => "VEEGAN_DAE",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }

    /// Whether the method trains a reconstructor and a joint discriminator.
    pub fn has_reconstructor(self) -> bool {
        matches!(self, Method::Ali | Method::Veegan | Method::VeeganDae)
    }
}

/// How the reconstructor is pretrained before the main loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainMode {
    /// Run only the discriminator and reconstructor updates of the main loop.
    #[default]
    WarmUp,
    /// Regress `F(x)` toward a fixed pool of `N(0, I)` draws paired with data.
    RegressToPrior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub method: Method,
    /// Dimension `K` of the reconstructed latent code.
    pub latent_dim: usize,
    /// Extra generator noise inputs that are never reconstructed.
    pub extra_noise_dims: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub gen_hidden: Vec<usize>,
    pub rec_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub gen_activation: Activation,
    pub rec_activation: Activation,
    pub disc_activation: Activation,
    pub gen_opt: OptConfig,
    pub rec_opt: OptConfig,
    pub disc_opt: OptConfig,
    /// Inner discriminator steps differentiated through (UNROLLED only).
    pub unroll_steps: usize,
    /// Plain SGD step size of the unrolled inner updates.
    pub unroll_lr: f64,
    pub pretrain_steps: usize,
    pub pretrain_mode: PretrainMode,
    /// Weight of the data-space autoencoder loss (VEEGAN_DAE only).
    pub lambda: f64,
    /// Non-saturating generator loss for GAN, UNROLLED and ALI.
    pub enhanced_gen_loss: bool,
    pub generator_disc_term: GeneratorDiscTerm,
    /// Std of the Gaussian noise around `F(x)` when sampling `z_g`.
    pub reconstructor_noise: f64,
    pub seed: u64,
    /// Loss-trace period in steps; 0 keeps only the final step.
    pub trace_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            method: Method::Veegan,
            latent_dim: 2,
            extra_noise_dims: 1,
            batch_size: 128,
            steps: 25_000,
            gen_hidden: vec![128, 128],
            rec_hidden: vec![128, 128],
            disc_hidden: vec![128, 128],
            gen_activation: Activation::Tanh,
            rec_activation: Activation::Tanh,
            disc_activation: Activation::leaky(),
            gen_opt: OptConfig::default(),
            rec_opt: OptConfig::default(),
            disc_opt: OptConfig::default(),
            unroll_steps: 5,
            unroll_lr: 1e-3,
            pretrain_steps: 0,
            pretrain_mode: PretrainMode::WarmUp,
            lambda: 0.01,
            enhanced_gen_loss: true,
            generator_disc_term: GeneratorDiscTerm::Raw,
            reconstructor_noise: 1.0,
            seed: 0,
            trace_every: 100,
        }
    }
}

impl TrainerConfig {
    pub fn for_method(method: Method) -> Self {
        TrainerConfig { method, ..Default::default() }
    }

    /// Width of the generator input: latent code plus extra noise.
    pub fn generator_input_dim(&self) -> usize {
        self.latent_dim + self.extra_noise_dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.reconstructor_noise >= 0.0) {
            return Err(Error::Config("reconstructor_noise must be >= 0".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if !(self.unroll_lr >= 0.0) {
            return Err(Error::Config("unroll_lr must be >= 0".into()));
        }
        Ok(())
    }
}
