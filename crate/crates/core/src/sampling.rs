//! Reproducible random test states: Gaussian Hermitian ensemble spins,
//! spread-out alcove points, random unitaries and diagonal phases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{
    hermitize, CMat, HermitianMatrix, PhaseDiagonal, RegularRealDiagonal, MIN_GAP_DEFAULT,
};

/// Minimum level spacing enforced when sampling alcove points; keeps
/// coth/sinh well-conditioned in randomized suites.
pub const SAMPLE_GAP: f64 = 0.2;

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_complex_matrix<R: Rng>(n: usize, rng: &mut R) -> CMat {
    DMatrix::from_fn(n, n, |_, _| Complex64::new(normal(rng), normal(rng)))
}

/// GUE sample scaled to Frobenius norm ~ 1.
pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> HermitianMatrix {
    let a = random_complex_matrix(n, rng);
    let h = hermitize(&a);
    let norm = h
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(1e-12);
    HermitianMatrix::new(h * Complex64::new(1.0 / norm, 0.0)).expect("hermitized sample")
}

/// Sorted Gaussian with gaps spread to at least SAMPLE_GAP.
pub fn random_alcove_point<R: Rng>(n: usize, rng: &mut R) -> RegularRealDiagonal {
    let mut v: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for j in 1..n {
        if v[j] > v[j - 1] - SAMPLE_GAP {
            v[j] = v[j - 1] - SAMPLE_GAP;
        }
    }
    RegularRealDiagonal::new(v, MIN_GAP_DEFAULT).expect("spread sample is regular")
}

pub fn random_phase<R: Rng>(n: usize, rng: &mut R) -> PhaseDiagonal {
    PhaseDiagonal::new(
        (0..n)
            .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect(),
    )
}

/// Haar-like unitary from the QR factorization of a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let a = random_complex_matrix(n, rng);
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / Complex64::new(d.norm(), 0.0);
            for i in 0..n {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// Purely imaginary diagonal (element of T).
pub fn random_t_diagonal<R: Rng>(n: usize, rng: &mut R) -> CMat {
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            Complex64::new(0.0, normal(rng))
        } else {
            Complex64::default()
        }
    })
}
