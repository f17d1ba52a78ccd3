use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::tensor::Tensor;

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seeded ChaCha12 stream with deterministic sub-streams.
///
/// `split` derives a child from this stream's seed and a label only, never
/// from the parent's position, so adding draws to one sampling site leaves
/// every other site untouched.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha12Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn split(&self, stream: u64) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn split_named(&self, label: &str) -> Rng {
        self.split(fnv1a(label))
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn randn(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.normal()).collect();
        Tensor::new(shape.to_vec(), data).expect("length matches shape")
    }

    pub fn rand_uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.uniform(lo, hi)).collect();
        Tensor::new(shape.to_vec(), data).expect("length matches shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = Rng::new(42).randn(&[4, 3]);
        let b = Rng::new(42).randn(&[4, 3]);
        assert_eq!(a, b);
        assert_ne!(a, Rng::new(43).randn(&[4, 3]));
    }

    #[test]
    fn empty_shape() {
        let t = Rng::new(0).randn(&[0]);
        assert!(t.is_empty());
        assert_eq!(t.shape(), &[0]);
    }

    #[test]
    fn split_ignores_parent_position() {
        let mut parent = Rng::new(9);
        let child_before = parent.split_named("gen").randn(&[5]);
        parent.randn(&[100]);
        let child_after = parent.split_named("gen").randn(&[5]);
        assert_eq!(child_before, child_after);
        assert_ne!(child_before, parent.split_named("disc").randn(&[5]));
    }

    #[test]
    fn normal_moments() {
        let t = Rng::new(123).randn(&[1_000_000]);
        let mean = t.mean();
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64;
        assert!(mean.abs() <= 0.01, "mean {mean}");
        assert!((var - 1.0).abs() <= 0.02, "var {var}");
    }

    #[test]
    fn uniform_range() {
        let t = Rng::new(5).rand_uniform(&[10_000], -2.0, 3.0);
        assert!(t.data().iter().all(|&v| (-2.0..3.0).contains(&v)));
        assert!((t.mean() - 0.5).abs() < 0.05);
    }
}
