//! Mode-collapse and sample-quality metrics.
//!
//! Distances are Euclidean in the ambient data space. For embedded mixtures
//! the embedding is an isometry, so they equal intrinsic distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtape::{Rng, Tape, Tensor};
use crate::nn::{NetParams, OptConfig, OptState};
use crate::synth::MixtureSpec;
use crate::train::TrainedModel;

fn check_samples(samples: &Tensor, spec: &MixtureSpec, op: &'static str) -> Result<(usize, usize)> {
    let (n, d) = samples.dims2(op)?;
    if d != spec.dim() {
        return Err(Error::shape(op, samples.shape(), &[n, spec.dim()]));
    }
    Ok((n, d))
}

/// Index of the nearest mixture mean and the distance to it, per sample.
/// Exact ties go to the lowest component index.
pub fn nearest_modes(samples: &Tensor, spec: &MixtureSpec) -> Result<Vec<(usize, f64)>> {
    let (n, d) = check_samples(samples, spec, "nearest_modes")?;
    let means = spec.means();
    let k = spec.n_components();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = &samples.data()[i * d..(i + 1) * d];
        let mut best = (0, f64::INFINITY);
        for j in 0..k {
            let m = &means.data()[j * d..(j + 1) * d];
            let d2: f64 = s.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (j, d2);
            }
        }
        out.push((best.0, best.1.sqrt()));
    }
    Ok(out)
}

/// `mask[i]` is true when sample `i` lies within `m·sigma` of its nearest mode.
pub fn high_quality_mask(samples: &Tensor, spec: &MixtureSpec) -> Result<Vec<bool>> {
    let r = spec.quality_radius();
    Ok(nearest_modes(samples, spec)?.into_iter().map(|(_, dist)| dist <= r).collect())
}

/// Number of components that are the nearest mode of at least one
/// high-quality sample.
pub fn modes_captured(samples: &Tensor, spec: &MixtureSpec) -> Result<usize> {
    let r = spec.quality_radius();
    let mut hit = vec![false; spec.n_components()];
    for (j, dist) in nearest_modes(samples, spec)? {
        if dist <= r {
            hit[j] = true;
        }
    }
    Ok(hit.iter().filter(|&&h| h).count())
}

pub fn hq_fraction(samples: &Tensor, spec: &MixtureSpec) -> Result<f64> {
    let mask = high_quality_mask(samples, spec)?;
    if mask.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    Ok(mask.iter().filter(|&&h| h).count() as f64 / mask.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IvomConfig {
    pub steps: usize,
    pub restarts: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for IvomConfig {
    fn default() -> Self {
        IvomConfig {
            steps: 200,
            restarts: 3,
            lr: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IvomResult {
    /// Mean over targets of the best per-target `‖x − G(z)‖² / D`.
    pub mse: f64,
    pub per_target: Vec<f64>,
    /// Targets whose optimization diverged on every restart; they count as +inf.
    pub diverged: Vec<usize>,
}

/// Per-row `‖x − G(z)‖² / D`, or `None` if the forward pass fails.
fn row_errors(generator: &NetParams, z: &Tensor, targets: &Tensor) -> Option<Vec<f64>> {
    let out = generator.predict(z).ok()?;
    let d = targets.shape()[1];
    let errs: Vec<f64> = out
        .data()
        .chunks(d)
        .zip(targets.data().chunks(d))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / d as f64)
        .collect();
    Some(errs)
}

/// Adam on the rows of `z`; every row only affects its own loss term, so
/// this is `m` independent optimizations done as one batch.
fn optimize_latents(generator: &NetParams, z0: Tensor, targets: &Tensor, cfg: &IvomConfig) -> Result<Tensor> {
    let d = targets.shape()[1] as f64;
    let mut z = z0;
    let mut opt = OptState::new(
        OptConfig {
            lr: cfg.lr,
            beta1: 0.9,
            ..OptConfig::adam(cfg.lr)
        },
        &[&z],
    );
    let params: Vec<Tensor> = generator.tensors().into_iter().cloned().collect();
    for _ in 0..cfg.steps {
        let mut tape = Tape::new();
        let p: Vec<_> = params.iter().map(|t| tape.constant(t.clone())).collect::<Result<_>>()?;
        let zv = tape.leaf(z.clone())?;
        let t = tape.constant(targets.clone())?;
        let out = generator.forward_with(&mut tape, &p, zv)?;
        let sq = tape.squared_l2(out, t)?;
        let loss = tape.scale(sq, 1.0 / d)?;
        let g = tape.backward(loss, &[zv])?;
        opt.update(&mut [&mut z], &g)?;
    }
    Ok(z)
}

/// Inference via optimization: for each target, the best squared distance
/// (per dimension) to any generator output found by gradient descent on the
/// full generator input, extra noise included.
pub fn ivom(generator: &NetParams, targets: &Tensor, cfg: &IvomConfig) -> Result<IvomResult> {
    let (m, d) = targets.dims2("ivom")?;
    if d != generator.out_dim() {
        return Err(Error::shape("ivom", targets.shape(), &[m, generator.out_dim()]));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("ivom needs at least one target".into()));
    }
    let k = generator.in_dim();
    let root = Rng::new(cfg.seed);
    let mut best = vec![f64::INFINITY; m];
    for r in 0..cfg.restarts.max(1) {
        let z0 = root.split(r as u64).randn(&[m, k]);
        let errs = match optimize_latents(generator, z0.clone(), targets, cfg) {
            Ok(z) => row_errors(generator, &z, targets),
            Err(_) => None,
        };
        let errs = match errs {
            Some(e) => e,
            // Redo this restart target by target so one bad target does
            // not poison the rest.
            None => (0..m)
                .map(|i| {
                    let zi = Tensor::new(vec![1, k], z0.row(i).to_vec()).expect("row width");
                    let ti = Tensor::new(vec![1, d], targets.row(i).to_vec()).expect("row width");
                    optimize_latents(generator, zi, &ti, cfg)
                        .ok()
                        .and_then(|z| row_errors(generator, &z, &ti))
                        .map_or(f64::INFINITY, |e| e[0])
                })
                .collect(),
        };
        for (b, e) in best.iter_mut().zip(errs) {
            if e.is_finite() && e < *b {
                *b = e;
            }
        }
    }
    let diverged: Vec<usize> = (0..m).filter(|&i| !best[i].is_finite()).collect();
    let mse = best.iter().sum::<f64>() / m as f64;
    Ok(IvomResult {
        mse,
        per_target: best,
        diverged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub modes: usize,
    pub hq_fraction: f64,
    pub ivom: Option<f64>,
    /// Number of IvOM targets that diverged.
    pub ivom_diverged: usize,
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one run).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub runs: Vec<RunMetrics>,
    pub modes: Summary,
    pub hq_fraction: Summary,
    pub ivom: Option<Summary>,
}

impl MetricsReport {
    pub fn from_runs(n_samples: usize, runs: Vec<RunMetrics>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidArgument("no runs to aggregate".into()));
        }
        let modes: Vec<f64> = runs.iter().map(|r| r.modes as f64).collect();
        let hq: Vec<f64> = runs.iter().map(|r| r.hq_fraction).collect();
        let ivom: Option<Vec<f64>> = runs.iter().map(|r| r.ivom).collect();
        Ok(MetricsReport {
            n_samples,
            modes: Summary::of(&modes),
            hq_fraction: Summary::of(&hq),
            ivom: ivom.map(|v| Summary::of(&v)),
            runs,
        })
    }
}

/// Metrics of one sample set. Fails on an empty set.
pub fn evaluate_samples(samples: &Tensor, spec: &MixtureSpec) -> Result<RunMetrics> {
    Ok(RunMetrics {
        modes: modes_captured(samples, spec)?,
        hq_fraction: hq_fraction(samples, spec)?,
        ivom: None,
        ivom_diverged: 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub ivom: bool,
    pub ivom_targets: usize,
    pub ivom_steps: usize,
    pub ivom_restarts: usize,
    pub ivom_lr: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let o = IvomConfig::default();
        EvalConfig {
            n_samples: 2500,
            ivom: false,
            ivom_targets: 200,
            ivom_steps: o.steps,
            ivom_restarts: o.restarts,
            ivom_lr: o.lr,
        }
    }
}

impl EvalConfig {
    pub fn ivom_config(&self, seed: u64) -> IvomConfig {
        IvomConfig {
            steps: self.ivom_steps,
            restarts: self.ivom_restarts,
            lr: self.ivom_lr,
            seed,
        }
    }
}

/// Evaluates one model. Generator samples, IvOM targets and IvOM restarts
/// each use their own stream of `eval_seed`.
pub fn evaluate_model(model: &TrainedModel, spec: &MixtureSpec, cfg: &EvalConfig, eval_seed: u64) -> Result<RunMetrics> {
    let root = Rng::new(eval_seed);
    let samples = model.sample(&mut root.split_named("eval/samples"), cfg.n_samples)?;
    let mut m = evaluate_samples(&samples, spec)?;
    if cfg.ivom {
        let targets = spec.sample(&mut root.split_named("eval/ivom_targets"), cfg.ivom_targets);
        let r = ivom(&model.generator, &targets, &cfg.ivom_config(root.split_named("eval/ivom_restarts").seed()))?;
        m.ivom = Some(r.mse);
        m.ivom_diverged = r.diverged.len();
    }
    Ok(m)
}

/// Evaluates every model with the same evaluation seed and aggregates.
pub fn evaluate(models: &[TrainedModel], spec: &MixtureSpec, cfg: &EvalConfig, eval_seed: u64) -> Result<MetricsReport> {
    let runs = models
        .iter()
        .map(|m| evaluate_model(m, spec, cfg, eval_seed))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_runs(cfg.n_samples, runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};
    use crate::synth::{make_grid, make_ring};

    fn ring() -> MixtureSpec {
        make_ring(8, 2.0, 0.02).unwrap()
    }

    #[test]
    fn samples_at_means_are_all_high_quality() {
        let spec = ring();
        let mask = high_quality_mask(spec.means(), &spec).unwrap();
        assert!(mask.iter().all(|&m| m));
        assert_eq!(modes_captured(spec.means(), &spec).unwrap(), 8);
    }

    #[test]
    fn far_sample_is_low_quality() {
        let spec = ring();
        // 4σ radially outward from mode 0 at (2, 0); every other mode is farther.
        let s = Tensor::from_rows(&[vec![2.0 + 4.0 * 0.02, 0.0]]).unwrap();
        assert_eq!(high_quality_mask(&s, &spec).unwrap(), vec![false]);
        assert_eq!(modes_captured(&s, &spec).unwrap(), 0);
    }

    #[test]
    fn collapsed_sampler() {
        let spec = ring();
        let rows = vec![spec.means().row(0).to_vec(); 50];
        let s = Tensor::from_rows(&rows).unwrap();
        let m = evaluate_samples(&s, &spec).unwrap();
        assert_eq!(m.modes, 1);
        assert_eq!(m.hq_fraction, 1.0);
    }

    #[test]
    fn hand_built_mixed_set() {
        let spec = ring();
        let near = |j: usize, dx: f64| {
            let m = spec.means().row(j);
            vec![m[0] + dx, m[1]]
        };
        let rows = vec![near(1, 0.01), near(1, -0.02), near(4, 0.03), vec![10.0, 10.0], vec![0.0, 0.0]];
        let s = Tensor::from_rows(&rows).unwrap();
        // Brute-force oracle: nearest mode by full enumeration.
        let r = 3.0 * 0.02;
        let mut seen = std::collections::BTreeSet::new();
        for row in &rows {
            let mut dists: Vec<(f64, usize)> = (0..8)
                .map(|j| {
                    let m = spec.means().row(j);
                    (((row[0] - m[0]).powi(2) + (row[1] - m[1]).powi(2)).sqrt(), j)
                })
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if dists[0].0 <= r {
                seen.insert(dists[0].1);
            }
        }
        assert_eq!(seen.len(), 2);
        assert_eq!(modes_captured(&s, &spec).unwrap(), seen.len());
        assert_eq!(hq_fraction(&s, &spec).unwrap(), 0.6);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let spec = make_grid(5, 2.0, 0.05).unwrap();
        let m0 = spec.means().row(0).to_vec();
        let m1 = spec.means().row(1).to_vec();
        let mid = Tensor::from_rows(&[vec![(m0[0] + m1[0]) / 2.0, (m0[1] + m1[1]) / 2.0]]).unwrap();
        assert_eq!(nearest_modes(&mid, &spec).unwrap()[0].0, 0);
    }

    #[test]
    fn true_sampler_hq_fraction_matches_chi_square() {
        let spec = ring();
        let s = spec.sample(&mut Rng::new(3), 10_000);
        let f = hq_fraction(&s, &spec).unwrap();
        let expect = 1.0 - (-4.5f64).exp();
        assert!((f - expect).abs() < 0.005, "{f}");
        assert_eq!(modes_captured(&s, &spec).unwrap(), 8);
    }

    #[test]
    fn empty_and_wrong_dim_inputs_fail() {
        let spec = ring();
        assert!(hq_fraction(&Tensor::zeros(&[0, 2]), &spec).is_err());
        assert!(high_quality_mask(&Tensor::zeros(&[3, 5]), &spec).is_err());
        assert!(MetricsReport::from_runs(10, vec![]).is_err());
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[4.0]).std, 0.0);
    }

    fn linear_net(w: Vec<Vec<f64>>) -> NetParams {
        let out = w.len();
        let layer = Layer {
            weight: Tensor::from_rows(&w).unwrap(),
            bias: Tensor::zeros(&[out]),
        };
        NetParams::from_layers(vec![layer], Activation::Identity, Activation::Identity).unwrap()
    }

    #[test]
    fn ivom_constant_generator_is_exact() {
        let c = [0.5, -1.0];
        let layer = Layer {
            weight: Tensor::zeros(&[2, 3]),
            bias: Tensor::vector(c.to_vec()),
        };
        let g = NetParams::from_layers(vec![layer], Activation::Identity, Activation::Identity).unwrap();
        let targets = Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let r = ivom(&g, &targets, &IvomConfig::default()).unwrap();
        let oracle = ((0.25 + 4.0) / 2.0 + (0.25 + 1.0) / 2.0) / 2.0;
        assert_eq!(r.mse, oracle);
    }

    #[test]
    fn ivom_realizable_target() {
        let g = NetParams::init(&mut Rng::new(5), &[3, 16, 2], Activation::Tanh, Activation::Identity).unwrap();
        let z0 = Rng::new(6).randn(&[10, 3]).map(|v| 0.5 * v);
        let targets = g.predict(&z0).unwrap();
        let r = ivom(&g, &targets, &IvomConfig::default()).unwrap();
        assert!(r.mse < 1e-4, "{}", r.mse);
        assert!(r.diverged.is_empty());
    }

    #[test]
    fn ivom_linear_generator_matches_least_squares() {
        let w = vec![vec![1.0, 0.5], vec![-0.3, 1.2], vec![0.8, -0.7]];
        let g = linear_net(w.clone());
        let targets = Rng::new(9).randn(&[6, 3]);
        let cfg = IvomConfig { steps: 2000, ..IvomConfig::default() };
        let r = ivom(&g, &targets, &cfg).unwrap();
        // Normal equations: z* = (WᵀW)⁻¹ Wᵀ x.
        let mut wtw = [[0.0; 2]; 2];
        for row in &w {
            for i in 0..2 {
                for j in 0..2 {
                    wtw[i][j] += row[i] * row[j];
                }
            }
        }
        let det = wtw[0][0] * wtw[1][1] - wtw[0][1] * wtw[1][0];
        let inv = [[wtw[1][1] / det, -wtw[0][1] / det], [-wtw[1][0] / det, wtw[0][0] / det]];
        let mut total = 0.0;
        for t in 0..6 {
            let x = targets.row(t);
            let wtx: Vec<f64> = (0..2).map(|i| (0..3).map(|k| w[k][i] * x[k]).sum()).collect();
            let z: Vec<f64> = (0..2).map(|i| inv[i][0] * wtx[0] + inv[i][1] * wtx[1]).collect();
            let res: f64 = (0..3).map(|k| (x[k] - w[k][0] * z[0] - w[k][1] * z[1]).powi(2)).sum();
            total += res / 3.0;
        }
        let oracle = total / 6.0;
        assert!((r.mse - oracle).abs() < 1e-6, "{} vs {oracle}", r.mse);
    }
}
