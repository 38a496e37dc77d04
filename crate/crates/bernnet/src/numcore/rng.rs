//! Self-contained deterministic RNG.
//!
//! Algorithm (fixed; changing it would invalidate golden outputs):
//! the 256-bit state is seeded from a single `u64` with SplitMix64, then
//! advanced with xoshiro256++ (Blackman & Vigna). Uniform doubles take the
//! top 53 bits; normal deviates use the Box-Muller transform, drawing two
//! uniforms per pair and caching the second value.

use super::Matrix;

#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
    cached_normal: Option<f64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
            cached_normal: None,
        }
    }

    /// Derive an independent child stream; used to decouple e.g. weight
    /// initialization from batch shuffling so adding one consumer does not
    /// shift another's stream.
    pub fn derive(&self, label: u64) -> Rng {
        let mut sm = self.s[0] ^ self.s[3] ^ label.wrapping_mul(0xA24BAED4963EE407);
        let mut s = [0u64; 4];
        for v in &mut s {
            *v = splitmix64(&mut sm);
        }
        Rng {
            s,
            cached_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). Rejection-free modulo would bias; use
    /// Lemire-style rejection on the top bits.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        let n = n as u64;
        loop {
            let v = self.next_u64();
            let (hi, lo) = {
                let m = (v as u128) * (n as u128);
                ((m >> 64) as u64, m as u64)
            };
            if lo >= n || lo >= n.wrapping_neg() % n {
                return hi as usize;
            }
        }
    }

    /// Standard normal via Box-Muller. `stddev = 0` degenerates to `mean`.
    pub fn normal(&mut self, mean: f64, stddev: f64) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return mean + stddev * z;
        }
        // u1 in (0,1] so ln is finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        mean + stddev * r * theta.cos()
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, mean: f64, stddev: f64) -> Matrix {
        assert!(stddev >= 0.0);
        let data = (0..rows * cols).map(|_| self.normal(mean, stddev)).collect();
        Matrix::from_vec(rows, cols, data).expect("sized by construction")
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| self.uniform_range(lo, hi))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("sized by construction")
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
