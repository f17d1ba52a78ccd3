use serde::{Deserialize, Serialize};

use crate::bound::Prop1Thresholds;
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::ndtape::{mix64, Rng};
use crate::synth::{make_grid, make_highdim, make_ring, make_standard_normal, MixtureSpec};
use crate::train::{Method, TrainerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Ring,
    Grid,
    Highdim,
    /// Standard normal, one component at the origin.
    Normal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_modes: usize,
    pub radius: f64,
    pub side: usize,
    pub spacing: f64,
    /// Component std; when absent, 0.02 for the ring, 0.05 for the grid
    /// and 0.1 for the high-dimensional mixture.
    pub sigma: Option<f64>,
    pub d_low: usize,
    pub d_high: usize,
    /// Dimensions used instead of `d_low`/`d_high` by `--long`.
    pub long_d_low: usize,
    pub long_d_high: usize,
    pub mode_scale: f64,
    /// Dimension of the `normal` dataset.
    pub dim: usize,
    /// Seed for the random means and embedding of the high-dimensional mixture.
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Ring,
            n_modes: 8,
            radius: 2.0,
            side: 5,
            spacing: 2.0,
            sigma: None,
            d_low: 30,
            d_high: 60,
            long_d_low: 700,
            long_d_high: 1200,
            mode_scale: 1.0,
            dim: 1,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(match self.kind {
            DatasetKind::Ring => 0.02,
            DatasetKind::Grid => 0.05,
            DatasetKind::Highdim => 0.1,
            DatasetKind::Normal => 1.0,
        })
    }

    pub fn build(&self, long: bool) -> Result<MixtureSpec> {
        let sigma = self.sigma();
        match self.kind {
            DatasetKind::Ring => make_ring(self.n_modes, self.radius, sigma),
            DatasetKind::Grid => make_grid(self.side, self.spacing, sigma),
            DatasetKind::Highdim => {
                let (lo, hi) = if long {
                    (self.long_d_low, self.long_d_high)
                } else {
                    (self.d_low, self.d_high)
                };
                let mut rng = Rng::new(self.seed).split_named("dataset/highdim");
                make_highdim(&mut rng, self.n_modes, lo, hi, sigma, self.mode_scale)
            }
            DatasetKind::Normal => make_standard_normal(self.dim),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub methods: Vec<Method>,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Output directory; relative paths resolve against the output root.
    pub output_dir: Option<String>,
    /// Write the trained networks of every run.
    pub save_models: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: "experiment".into(),
            methods: vec![Method::Veegan],
            n_runs: 5,
            master_seed: 0,
            output_dir: None,
            save_models: true,
        }
    }
}

/// A parsed experiment file. Every field has a default.
///
/// `[trainer]` holds settings shared by all methods; a `[trainer.<METHOD>]`
/// sub-table overrides them for one method. `method` and `seed` are
/// filled in per run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub dataset: DatasetConfig,
    pub trainer: toml::Table,
    pub eval: EvalConfig,
    pub prop1: Prop1Thresholds,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    dataset: DatasetConfig,
    #[serde(default)]
    trainer: toml::Table,
    #[serde(default)]
    eval: EvalConfig,
    #[serde(default)]
    prop1: Prop1Thresholds,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string().trim().replace('\n', " "))
}

/// Derives the seed of run `r`. Seeds do not depend on the number of runs.
pub fn run_seed(master: u64, r: usize) -> u64 {
    mix64(master ^ mix64(r as u64))
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentSection::default(),
            dataset: DatasetConfig::default(),
            trainer: toml::Table::new(),
            eval: EvalConfig::default(),
            prop1: Prop1Thresholds::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: Raw = toml::from_str(text).map_err(config_err)?;
        let cfg = ExperimentConfig {
            experiment: raw.experiment,
            dataset: raw.dataset,
            trainer: raw.trainer,
            eval: raw.eval,
            prop1: raw.prop1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.experiment.methods.is_empty() {
            return Err(Error::Config("experiment.methods is empty".into()));
        }
        if self.experiment.n_runs == 0 {
            return Err(Error::Config("experiment.n_runs must be >= 1".into()));
        }
        for key in self.trainer.keys() {
            if key.chars().all(|c| c.is_ascii_uppercase() || c == '_') && !key.is_empty() {
                Method::parse(key).map_err(|_| Error::Config(format!("unknown method table `trainer.{key}`")))?;
            }
        }
        for m in &self.experiment.methods {
            self.trainer_config(*m, 0)?;
        }
        Ok(())
    }

    /// The fully resolved trainer configuration of one run.
    pub fn trainer_config(&self, method: Method, seed: u64) -> Result<TrainerConfig> {
        let mut table = toml::Table::new();
        for (k, v) in &self.trainer {
            if !v.is_table() || !k.chars().all(|c| c.is_ascii_uppercase() || c == '_') {
                table.insert(k.clone(), v.clone());
            }
        }
        if let Some(over) = self.trainer.get(method.name()).and_then(|v| v.as_table()) {
            for (k, v) in over {
                table.insert(k.clone(), v.clone());
            }
        }
        let mut cfg: TrainerConfig = table
            .try_into()
            .map_err(|e| config_err(format!("trainer: {e}")))?;
        cfg.method = method;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolved configuration as TOML, with every default filled in.
    pub fn resolved_toml(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Resolved<'a> {
            experiment: &'a ExperimentSection,
            dataset: &'a DatasetConfig,
            eval: &'a EvalConfig,
            prop1: &'a Prop1Thresholds,
            trainer: toml::Table,
        }
        let mut trainer = toml::Table::new();
        for m in &self.experiment.methods {
            let cfg = self.trainer_config(*m, 0)?;
            let mut t = toml::Table::try_from(&cfg).map_err(config_err)?;
            t.remove("seed");
            trainer.insert(m.name().to_string(), toml::Value::Table(t));
        }
        let r = Resolved {
            experiment: &self.experiment,
            dataset: &self.dataset,
            eval: &self.eval,
            prop1: &self.prop1,
            trainer,
        };
        toml::to_string(&r).map_err(config_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.experiment.n_runs, 5);
        assert_eq!(c.trainer_config(Method::Veegan, 3).unwrap().seed, 3);
        assert_eq!(c.dataset.sigma(), 0.02);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = ExperimentConfig::parse("[trainer]\nbatch_sise = 3\n").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("batch_sise")), "{e}");
        let e = ExperimentConfig::parse("[dataset]\nradiuss = 3.0\n").unwrap_err();
        assert!(e.to_string().contains("radiuss"), "{e}");
        let e = ExperimentConfig::parse("[nonsense]\n").unwrap_err();
        assert!(e.to_string().contains("nonsense"), "{e}");
    }

    #[test]
    fn per_method_overrides() {
        let text = r#"
[experiment]
methods = ["GAN", "UNROLLED"]

[trainer]
steps = 10
batch_size = 4

[trainer.UNROLLED]
steps = 3
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.trainer_config(Method::Gan, 0).unwrap().steps, 10);
        let u = c.trainer_config(Method::Unrolled, 0).unwrap();
        assert_eq!((u.steps, u.batch_size), (3, 4));
        assert!(ExperimentConfig::parse("[trainer.FOO]\nsteps = 1\n").is_err());
    }

    #[test]
    fn run_seeds_are_stable() {
        let a: Vec<u64> = (0..3).map(|r| run_seed(7, r)).collect();
        let b: Vec<u64> = (0..5).map(|r| run_seed(7, r)).collect();
        assert_eq!(a[..], b[..3]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn resolved_config_parses_back() {
        let c = ExperimentConfig::parse("[trainer]\nsteps = 7\n").unwrap();
        let text = c.resolved_toml().unwrap();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(back.trainer_config(Method::Veegan, 1).unwrap(), c.trainer_config(Method::Veegan, 1).unwrap());
    }
}
