use ndarray::{Array1, ArrayView2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Reproducible random stream backed by ChaCha20 (a counter-mode generator).
///
/// Streams form a tree: `substream(i)` derives an independent child whose
/// key depends only on the parent key and `i`, so work split across threads
/// draws the same numbers regardless of scheduling.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let key = splitmix64(seed);
        Self {
            key,
            rng: ChaCha20Rng::seed_from_u64(key),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream `index`; independent of how much of `self` was consumed.
    pub fn substream(&self, index: u64) -> Self {
        let key = splitmix64(self.key ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self {
            key,
            rng: ChaCha20Rng::seed_from_u64(key),
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normals(&mut self, len: usize) -> Array1<f64> {
        Array1::from_shape_simple_fn(len, || self.standard_normal())
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.gen_range(0..bound)
    }

    /// Uniformly random permutation of `0..n` (Fisher–Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// `L z` with `z` i.i.d. standard normal.
pub fn sample_gaussian_vector(rng: &mut RngStream, l: ArrayView2<f64>) -> Result<Array1<f64>> {
    let (r, c) = l.dim();
    if r != c {
        return Err(Error::DimensionMismatch(format!("factor must be square, got {r}x{c}")));
    }
    let z = rng.normals(c);
    let mut out = Array1::zeros(r);
    for i in 0..r {
        let row = l.row(i);
        let mut acc = 0.0;
        for k in 0..=i {
            acc += row[k] * z[k];
        }
        out[i] = acc;
    }
    Ok(out)
}

/// Student t with 5 degrees of freedom rescaled to unit variance:
/// `Z / sqrt(χ²₅ / 5) · sqrt(3/5)`.
pub fn sample_scaled_t5(rng: &mut RngStream, len: usize) -> Array1<f64> {
    let scale = (3.0f64 / 5.0).sqrt();
    Array1::from_shape_simple_fn(len, || {
        let z = rng.standard_normal();
        let chi2: f64 = (0..5).map(|_| rng.standard_normal().powi(2)).sum();
        scale * z / (chi2 / 5.0).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn identical_seed_identical_stream() {
        let a = RngStream::new(42).normals(16);
        let b = RngStream::new(42).normals(16);
        assert_eq!(a, b);
        assert_ne!(a, RngStream::new(43).normals(16));
    }

    #[test]
    fn substream_ignores_parent_consumption() {
        let root = RngStream::new(7);
        let mut used = root.clone();
        used.normals(100);
        assert_eq!(root.substream(3).normals(8), used.substream(3).normals(8));
        assert_ne!(root.substream(3).normals(8), root.substream(4).normals(8));
    }

    #[test]
    fn identity_factor_returns_raw_draws() {
        let l = Array2::<f64>::eye(5);
        let v = sample_gaussian_vector(&mut RngStream::new(9), l.view()).unwrap();
        assert_eq!(v, RngStream::new(9).normals(5));
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = RngStream::new(1).permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn t5_deterministic() {
        let a = sample_scaled_t5(&mut RngStream::new(5), 32);
        let b = sample_scaled_t5(&mut RngStream::new(5), 32);
        assert_eq!(a, b);
    }
}
