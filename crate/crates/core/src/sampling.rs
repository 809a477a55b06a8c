//! Seeded randomness. Every random draw in the crate goes through a
//! ChaCha8 stream so runs are reproducible from a single `u64`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::theta::{validate_siegel, SiegelMatrix};
use crate::CVec;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
}

/// A random period matrix: real part uniform in `[-1/2, 1/2]`, imaginary
/// part `BBᵀ/g + 0.6·I` with `B` uniform in `[-1/2, 1/2]`.
pub fn random_siegel(g: usize, rng: &mut SeededRng) -> SiegelMatrix {
    let mut re = DMatrix::<f64>::zeros(g, g);
    for i in 0..g {
        for j in 0..=i {
            let x = rng.gen_range(-0.5..0.5);
            re[(i, j)] = x;
            re[(j, i)] = x;
        }
    }
    let b = DMatrix::<f64>::from_fn(g, g, |_, _| rng.gen_range(-0.5..0.5));
    let im = &b * b.transpose() / g as f64 + DMatrix::<f64>::identity(g, g) * 0.6;
    let omega = DMatrix::from_fn(g, g, |i, j| Complex64::new(re[(i, j)], im[(i, j)]));
    validate_siegel(&omega).expect("construction is positive definite")
}

/// `x + Ω y` with `x ∈ [0, 1)^g` and `y ∈ [-spread, spread)^g`.
pub fn random_torus_point(sm: &SiegelMatrix, spread: f64, rng: &mut SeededRng) -> CVec {
    let g = sm.genus();
    let x: Vec<f64> = (0..g).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..g).map(|_| rng.gen_range(-spread..spread)).collect();
    sm.omega_times(&y).into_iter().zip(x).map(|(oy, xi)| oy + xi).collect()
}

/// Complex vector with entries uniform in the square `[-r, r]²`.
pub fn random_cvec(g: usize, r: f64, rng: &mut SeededRng) -> CVec {
    (0..g)
        .map(|_| Complex64::new(rng.gen_range(-r..r), rng.gen_range(-r..r)))
        .collect()
}
