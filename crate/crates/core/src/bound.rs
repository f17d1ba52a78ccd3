//! Closed-form check of the entropy bound on a linear-Gaussian family, and
//! the fixed-point check for a VEEGAN trained on 1D standard-normal data.
//!
//! The family is `p(x) = N(0, 1)`, `p0(z) = N(0, 1)`,
//! `p_θ(z|x) = N(a·x, 1)` and `q_γ(x|z) = N(b·z, s²)`. Both joints over
//! `(z, x)` are zero-mean bivariate Gaussians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndtape::{Rng, Tensor};
use crate::train::TrainedModel;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianFamily {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

type Mat2 = [[f64; 2]; 2];

fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

impl LinearGaussianFamily {
    pub fn new(a: f64, b: f64, s: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!("need finite a, b and s > 0, got ({a}, {b}, {s})")));
        }
        Ok(LinearGaussianFamily { a, b, s })
    }

    /// Covariance of `p0(z) q(x|z)` over `(z, x)`.
    pub fn generator_joint_cov(&self) -> Mat2 {
        let (b, s) = (self.b, self.s);
        [[1.0, b], [b, b * b + s * s]]
    }

    /// Covariance of `p(x) p_θ(z|x)` over `(z, x)`.
    pub fn data_joint_cov(&self) -> Mat2 {
        let a = self.a;
        [[a * a + 1.0, a], [a, 1.0]]
    }

    /// `KL[p0(z) q(x|z) ‖ p(x) p_θ(z|x)]`.
    pub fn joint_kl(&self) -> Result<f64> {
        let q = self.generator_joint_cov();
        let p = self.data_joint_cov();
        let (dq, dp) = (det(&q), det(&p));
        if !(dq > 0.0 && dp > 0.0) {
            return Err(Error::InvalidArgument(format!("singular covariance for {self:?}")));
        }
        let p_inv = [[p[1][1] / dp, -p[0][1] / dp], [-p[1][0] / dp, p[0][0] / dp]];
        let trace = (0..2).map(|i| (0..2).map(|k| p_inv[i][k] * q[k][i]).sum::<f64>()).sum::<f64>();
        Ok(0.5 * (trace - 2.0 + (dp / dq).ln()))
    }
}

/// Cross-entropy `−E_{p0} log p_θ(z)`, where `p_θ(z) = N(0, a² + 1)`.
pub fn lhs_cross_entropy(fam: &LinearGaussianFamily) -> f64 {
    let v = fam.a * fam.a + 1.0;
    0.5 * (LN_2PI + v.ln()) + 0.5 / v
}

/// Joint KL plus the entropy of `p0`.
pub fn rhs_bound(fam: &LinearGaussianFamily) -> Result<f64> {
    Ok(fam.joint_kl()? + 0.5 * (LN_2PI + 1.0))
}

/// `(i − 10) / 5` for `i = 0..21`, so 0 is hit exactly.
pub fn grid_axis() -> Vec<f64> {
    (0..21).map(|i| (i as f64 - 10.0) / 5.0).collect()
}

pub const GRID_S: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub fam: LinearGaussianFamily,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundPoint {
    pub fn evaluate(fam: LinearGaussianFamily) -> Result<Self> {
        Ok(BoundPoint {
            lhs: lhs_cross_entropy(&fam),
            rhs: rhs_bound(&fam)?,
            fam,
        })
    }

    /// `rhs − lhs`; non-negative when the bound holds.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: usize,
    pub min_margin: f64,
    pub violations: Vec<BoundPoint>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `lhs ≤ rhs + tol` on the 21×21×5 grid. `swap` exchanges the two
/// sides, which must make the check fail.
pub fn sweep_grid(tol: f64, swap: bool) -> Result<SweepReport> {
    let axis = grid_axis();
    let mut report = SweepReport {
        points: 0,
        min_margin: f64::INFINITY,
        violations: Vec::new(),
    };
    for &a in &axis {
        for &b in &axis {
            for &s in &GRID_S {
                let mut p = BoundPoint::evaluate(LinearGaussianFamily::new(a, b, s)?)?;
                if swap {
                    std::mem::swap(&mut p.lhs, &mut p.rhs);
                }
                report.points += 1;
                report.min_margin = report.min_margin.min(p.margin());
                if p.lhs > p.rhs + tol {
                    report.violations.push(p);
                }
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prop1Thresholds {
    pub max_abs_mean: f64,
    pub min_std: f64,
    pub max_std: f64,
    pub max_recon_mse: f64,
}

impl Default for Prop1Thresholds {
    fn default() -> Self {
        Prop1Thresholds {
            max_abs_mean: 0.1,
            min_std: 0.85,
            max_std: 1.15,
            max_recon_mse: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub mean: f64,
    pub std: f64,
    pub recon_mse: f64,
    pub passed: bool,
}

/// Standard-normal draws shifted and scaled to sample mean 0 and
/// population standard deviation 1, so an identity generator reports
/// exact moments.
fn standardized_normal(rng: &mut Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
    v.into_iter().map(|x| (x - mean) / sd).collect()
}

/// Compares a model trained with `K = D = 1` on `N(0, 1)` data against the
/// fixed point `q(x) = p(x)`, `F(G(z)) = z`.
///
/// Generator samples use a standardized latent batch plus fresh extra
/// noise. The reported std uses the population (1/n) normalization.
pub fn proposition1_check(model: &TrainedModel, n: usize, seed: u64, th: &Prop1Thresholds) -> Result<Prop1Report> {
    let rec = model
        .reconstructor
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("model has no reconstructor".into()))?;
    if model.generator.out_dim() != 1 || rec.out_dim() != 1 || n < 2 {
        return Err(Error::InvalidArgument("needs a 1D model with K = D = 1 and n >= 2".into()));
    }
    let root = Rng::new(seed);
    let z = standardized_normal(&mut root.split_named("prop1/latent"), n);
    let extra = model.generator.in_dim() - 1;
    let e = root.split_named("prop1/extra_noise").randn(&[n, extra]);
    let mut input = Vec::with_capacity(n * (extra + 1));
    for (i, zi) in z.iter().enumerate() {
        input.push(*zi);
        input.extend_from_slice(e.row(i));
    }
    let x = model.generator.predict(&Tensor::new(vec![n, extra + 1], input)?)?;
    let z_hat = rec.predict(&x)?;

    let xs = x.data();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = (xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let recon_mse = z.iter().zip(z_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let passed = mean.abs() < th.max_abs_mean
        && std >= th.min_std
        && std <= th.max_std
        && recon_mse < th.max_recon_mse;
    Ok(Prop1Report {
        mean,
        std,
        recon_mse,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(a: f64, b: f64, s: f64) -> LinearGaussianFamily {
        LinearGaussianFamily::new(a, b, s).unwrap()
    }

    #[test]
    fn lhs_reference_values() {
        assert!((lhs_cross_entropy(&fam(0.0, 0.0, 1.0)) - 1.418_938_533_204_672_7).abs() < 1e-12);
        assert!((lhs_cross_entropy(&fam(1.0, 0.0, 1.0)) - 1.515_512_123_484_645_4).abs() < 1e-12);
    }

    #[test]
    fn lhs_grows_with_abs_a() {
        let axis = grid_axis();
        for w in axis.windows(2).filter(|w| w[0] >= 0.0) {
            assert!(lhs_cross_entropy(&fam(w[1], 0.0, 1.0)) > lhs_cross_entropy(&fam(w[0], 0.0, 1.0)));
            assert!(lhs_cross_entropy(&fam(-w[1], 0.0, 1.0)) > lhs_cross_entropy(&fam(-w[0], 0.0, 1.0)));
        }
    }

    #[test]
    fn equality_at_matching_joints() {
        let p = BoundPoint::evaluate(fam(0.0, 0.0, 1.0)).unwrap();
        assert!(p.margin().abs() < 1e-12);
        for (a, b, s) in [(0.1, 0.0, 1.0), (0.0, 0.1, 1.0), (0.0, 0.0, 1.1)] {
            assert!(BoundPoint::evaluate(fam(a, b, s)).unwrap().margin() > 0.0);
        }
    }

    #[test]
    fn strict_at_one_one_small_s() {
        let p = BoundPoint::evaluate(fam(1.0, 1.0, 0.1)).unwrap();
        assert!(p.rhs > p.lhs);
    }

    #[test]
    fn grid_sweep_passes_and_swap_fails() {
        let r = sweep_grid(1e-9, false).unwrap();
        assert_eq!(r.points, 21 * 21 * 5);
        assert!(r.passed(), "{:?}", r.violations.first());
        assert!(!sweep_grid(1e-9, true).unwrap().passed());
    }

    #[test]
    fn invalid_family() {
        assert!(LinearGaussianFamily::new(0.0, 0.0, 0.0).is_err());
        assert!(LinearGaussianFamily::new(f64::NAN, 0.0, 1.0).is_err());
    }
}
