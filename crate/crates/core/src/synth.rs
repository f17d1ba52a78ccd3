//! Isotropic Gaussian-mixture benchmarks: ring, grid and an embedded
//! high-dimensional mixture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtape::{Rng, Tensor};

/// Quality radius multiplier for the 2-D benchmarks.
pub const QUALITY_2D: f64 = 3.0;
/// Quality radius multiplier for the embedded high-dimensional benchmark.
pub const QUALITY_HIGHDIM: f64 = 10.0;

/// A uniform-weight mixture of isotropic Gaussians.
///
/// Component means live in an intrinsic space of dimension `d_low`. When
/// `embed` is present (a `d_high x d_low` matrix with orthonormal columns)
/// samples are `embed · (mean + sigma · eps)`; otherwise the ambient space is
/// the intrinsic one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub name: String,
    means: Vec<Vec<f64>>,
    sigma: f64,
    embed: Option<Vec<Vec<f64>>>,
    quality_multiplier: f64,
    #[serde(skip)]
    cache: Option<Cached>,
}

#[derive(Clone, Debug, PartialEq)]
struct Cached {
    means: Tensor,
    ambient_means: Tensor,
    embed_t: Option<Tensor>,
}

fn min_pairwise_distance(means: &Tensor) -> f64 {
    let m = means.shape()[0];
    let mut best = f64::INFINITY;
    for i in 0..m {
        for j in i + 1..m {
            let d: f64 = means
                .row(i)
                .iter()
                .zip(means.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Gram-Schmidt with one re-orthogonalization pass on the columns of a
/// `rows x cols` Gaussian draw.
fn random_orthonormal(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while columns.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for q in &columns {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        columns.push(v);
    }
    let mut data = vec![0.0; rows * cols];
    for (j, c) in columns.iter().enumerate() {
        for i in 0..rows {
            data[i * cols + j] = c[i];
        }
    }
    Tensor::new(vec![rows, cols], data).expect("sized above")
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect()
}

impl MixtureSpec {
    pub fn new(
        name: impl Into<String>,
        means: Tensor,
        sigma: f64,
        embed: Option<Tensor>,
        quality_multiplier: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !(quality_multiplier > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma ({sigma}) and quality multiplier ({quality_multiplier}) must be positive"
            )));
        }
        let (m, d_low) = means.dims2("mixture means")?;
        if m == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if let Some(e) = &embed {
            let (_, cols) = e.dims2("embed")?;
            if cols != d_low {
                return Err(Error::shape("embed", e.shape(), means.shape()));
            }
            let gram = Tensor::matmul_t(e, e, true, false)?;
            let off = gram.zip_map(&Tensor::identity(d_low), "embed", |a, b| a - b)?.max_abs();
            if off > 1e-10 {
                return Err(Error::InvalidArgument(format!("embed columns not orthonormal ({off:e})")));
            }
        }
        let required = 2.0 * quality_multiplier * sigma;
        let min_dist = min_pairwise_distance(&means);
        if m > 1 && !(min_dist > required) {
            return Err(Error::NotSeparable { min_dist, required });
        }
        let mut spec = MixtureSpec {
            name: name.into(),
            means: rows_of(&means),
            sigma,
            embed: embed.as_ref().map(rows_of),
            quality_multiplier,
            cache: None,
        };
        spec.build_cache()?;
        Ok(spec)
    }

    fn build_cache(&mut self) -> Result<()> {
        let means = Tensor::from_rows(&self.means)?;
        let embed = self.embed.as_ref().map(|e| Tensor::from_rows(e)).transpose()?;
        let (ambient_means, embed_t) = match &embed {
            Some(e) => (Tensor::matmul_t(&means, e, false, true)?, Some(e.transpose()?)),
            None => (means.clone(), None),
        };
        self.cache = Some(Cached { means, ambient_means, embed_t });
        Ok(())
    }

    fn cached(&self) -> &Cached {
        self.cache.as_ref().expect("MixtureSpec cache is built on construction")
    }

    /// Rebuilds derived tensors after deserialization and re-validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MixtureSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let means = Tensor::from_rows(&raw.means)?;
        let embed = raw.embed.as_ref().map(|e| Tensor::from_rows(e)).transpose()?;
        MixtureSpec::new(raw.name, means, raw.sigma, embed, raw.quality_multiplier)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mixture spec serializes")
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.cached().means.shape()[1]
    }

    /// Dimension of the data samples.
    pub fn dim(&self) -> usize {
        self.cached().ambient_means.shape()[1]
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn quality_multiplier(&self) -> f64 {
        self.quality_multiplier
    }

    /// Distance from a mode under which a sample counts as high quality.
    pub fn quality_radius(&self) -> f64 {
        self.quality_multiplier * self.sigma
    }

    pub fn intrinsic_means(&self) -> &Tensor {
        &self.cached().means
    }

    /// Component means in the data space, `[M, dim]`.
    pub fn means(&self) -> &Tensor {
        &self.cached().ambient_means
    }

    pub fn embed(&self) -> Option<Tensor> {
        self.cached().embed_t.as_ref().map(|t| t.transpose().expect("2-D"))
    }

    pub fn min_mode_distance(&self) -> f64 {
        min_pairwise_distance(self.means())
    }

    /// Draws `n` samples and the component each came from. The component ids
    /// are for diagnostics; trainers use [`MixtureSpec::sample`].
    pub fn sample_batch(&self, rng: &mut Rng, n: usize) -> (Tensor, Vec<usize>) {
        let c = self.cached();
        let m = self.n_components();
        let d = self.intrinsic_dim();
        let mut ids = Vec::with_capacity(n);
        let mut low = Vec::with_capacity(n * d);
        for _ in 0..n {
            let k = rng.below(m);
            ids.push(k);
            for &mu in c.means.row(k) {
                low.push(mu + self.sigma * rng.normal());
            }
        }
        let low = Tensor::new(vec![n, d], low).expect("sized above");
        let x = match &c.embed_t {
            Some(et) => low.matmul(et).expect("embed shape checked"),
            None => low,
        };
        (x, ids)
    }

    pub fn sample(&self, rng: &mut Rng, n: usize) -> Tensor {
        self.sample_batch(rng, n).0
    }
}

/// `n_modes` components evenly spaced on a circle, the first at `(radius, 0)`.
pub fn make_ring(n_modes: usize, radius: f64, sigma: f64) -> Result<MixtureSpec> {
    if n_modes == 0 || !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("ring needs n_modes >= 1 and radius > 0, got {n_modes}, {radius}")));
    }
    let rows: Vec<Vec<f64>> = (0..n_modes)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n_modes as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect();
    MixtureSpec::new("ring", Tensor::from_rows(&rows)?, sigma, None, QUALITY_2D)
}

/// A centred `side x side` lattice with the given spacing.
pub fn make_grid(side: usize, spacing: f64, sigma: f64) -> Result<MixtureSpec> {
    if side == 0 || !(spacing > 0.0) {
        return Err(Error::InvalidArgument(format!("grid needs side >= 1 and spacing > 0, got {side}, {spacing}")));
    }
    let offset = (side - 1) as f64 / 2.0;
    let coord = |i: usize| (i as f64 - offset) * spacing;
    let mut rows = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            rows.push(vec![coord(i), coord(j)]);
        }
    }
    MixtureSpec::new("grid", Tensor::from_rows(&rows)?, sigma, None, QUALITY_2D)
}

/// `n_modes` Gaussians with means `mode_scale · N(0, I_{d_low})`, embedded
/// isometrically into `d_high` dimensions.
pub fn make_highdim(
    rng: &mut Rng,
    n_modes: usize,
    d_low: usize,
    d_high: usize,
    sigma: f64,
    mode_scale: f64,
) -> Result<MixtureSpec> {
    if d_low == 0 || d_low > d_high || n_modes == 0 {
        return Err(Error::InvalidArgument(format!(
            "highdim needs 1 <= d_low <= d_high and n_modes >= 1, got {d_low}, {d_high}, {n_modes}"
        )));
    }
    let embed = random_orthonormal(rng, d_high, d_low);
    let mut last_err = None;
    for _ in 0..2 {
        let means = rng.randn(&[n_modes, d_low]).map(|v| v * mode_scale);
        match MixtureSpec::new("highdim", means, sigma, Some(embed.clone()), QUALITY_HIGHDIM) {
            Ok(spec) => return Ok(spec),
            Err(e @ Error::NotSeparable { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop ran"))
}

/// Standard normal in `dim` dimensions, a single component at the origin.
pub fn make_standard_normal(dim: usize) -> Result<MixtureSpec> {
    MixtureSpec::new("normal", Tensor::zeros(&[1, dim]), 1.0, None, QUALITY_2D)
}
