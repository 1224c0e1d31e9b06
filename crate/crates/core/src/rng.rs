//! Seeded normal generator with a fixed, documented construction so that
//! generated problems are reproducible across platforms and languages.
//!
//! * Core generator: PCG XSL RR 128/64 (`rand_pcg::Pcg64`), seeded through
//!   `SeedableRng::seed_from_u64`, which expands the `u64` seed with a
//!   PCG32 stream (multiplier 6364136223846793005, increment
//!   11634580027462260723) into the 32-byte state.
//! * Uniforms: `(next_u64() >> 11) * 2^-53`, i.e. 53 random mantissa bits in
//!   `[0, 1)`.
//! * Normals: Box–Muller, consuming two uniforms `u1, u2` per pair and
//!   returning `r cos(2πu2)` then `r sin(2πu2)` with `r = sqrt(-2 ln(1-u1))`.

use nalgebra::DMatrix;
use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub struct NormalStream {
    rng: Pcg64,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Pcg64::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Matrix filled column by column.
    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m[(i, j)] = self.normal();
            }
        }
        m
    }

    /// Like [`matrix`](Self::matrix) with every column scaled to unit 2-norm.
    pub fn unit_columns(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = self.matrix(rows, cols);
        for mut col in m.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        m
    }
}
