//! Deterministic low-discrepancy sampling (Halton sequence).
//!
//! The `seed` shifts the starting index of the sequence, so different seeds
//! give disjoint, reproducible point sets.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Points per unit of seed offset.
pub const SEED_STRIDE: u64 = 100_003;

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Halton point generator in `[0, 1)^dim`.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len(), "halton dimension out of range");
        Halton { dim, index: 1 + seed * SEED_STRIDE }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let p = (0..self.dim).map(|k| radical_inverse(self.index, PRIMES[k])).collect();
        self.index += 1;
        p
    }
}

/// `count` points in the closed Euclidean ball of radius `r` in `dim` dimensions,
/// produced by rejection from the enclosing cube.
pub fn ball_points(dim: usize, r: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut gen = Halton::new(dim, seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = gen.next_point();
        let x: Vec<f64> = u.iter().map(|v| r * (2.0 * v - 1.0)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() <= r * r {
            out.push(x);
        }
    }
    out
}
