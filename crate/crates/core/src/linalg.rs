//! Complex n x n matrix algebra over gl(n,C) viewed as a real Lie algebra:
//! the real trace form, the orthogonal splittings into (anti-)Hermitian and
//! diagonal/off-diagonal parts, matrix powers and exponentials, and the
//! ordered unitary-diagonal-unitary decomposition used by the projection
//! method.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

/// Absolute entrywise tolerance for Hermiticity-type invariants.
pub const HERM_TOL: f64 = 1e-12;
/// Constructors symmetrize instead of rejecting up to this residual.
pub const SYMMETRIZE_LIMIT: f64 = 1e-9;
/// Default hard gap for regular diagonals and log-singular values.
pub const MIN_GAP_DEFAULT: f64 = 1e-6;
/// Smallest singular value below which a matrix counts as non-invertible.
pub const INV_TOL: f64 = 1e-12;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn adjoint(x: &CMat) -> CMat {
    x.adjoint()
}

pub fn commutator(x: &CMat, y: &CMat) -> CMat {
    x * y - y * x
}

pub fn max_entry_norm(x: &CMat) -> f64 {
    x.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn check_square(x: &CMat) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(Error::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(x.nrows())
}

/// The invariant bilinear form <X,Y> = Re tr(XY).
pub fn pairing(x: &CMat, y: &CMat) -> Result<f64> {
    let n = check_square(x)?;
    let m = check_square(y)?;
    if n != m {
        return Err(Error::DimensionMismatch(n, m));
    }
    Ok(re_tr_product(x, y))
}

/// Re tr(XY) without dimension checks; callers guarantee equal sizes.
pub(crate) fn re_tr_product(x: &CMat, y: &CMat) -> f64 {
    let n = x.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for k in 0..n {
            let a = x[(j, k)];
            let b = y[(k, j)];
            acc += a.re * b.re - a.im * b.im;
        }
    }
    acc
}

/// The six projection targets from the splittings
/// gl(n,C) = u(n) + i u(n),  u(n) = T + Tperp,  i u(n) = A + Aperp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// Anti-Hermitian part (u(n)).
    G,
    /// Hermitian part (i u(n)).
    IG,
    /// Anti-Hermitian diagonal.
    T,
    /// Anti-Hermitian off-diagonal.
    TPerp,
    /// Hermitian (real) diagonal.
    A,
    /// Hermitian off-diagonal.
    APerp,
}

pub fn project(x: &CMat, part: Part) -> CMat {
    let adj = x.adjoint();
    let half = Complex64::new(0.5, 0.0);
    match part {
        Part::G => (x - &adj) * half,
        Part::IG => (x + &adj) * half,
        Part::T => keep_diagonal(&((x - &adj) * half)),
        Part::TPerp => drop_diagonal(&((x - &adj) * half)),
        Part::A => keep_diagonal(&((x + &adj) * half)),
        Part::APerp => drop_diagonal(&((x + &adj) * half)),
    }
}

fn keep_diagonal(x: &CMat) -> CMat {
    let n = x.nrows();
    CMat::from_fn(n, n, |j, k| {
        if j == k {
            x[(j, k)]
        } else {
            Complex64::default()
        }
    })
}

fn drop_diagonal(x: &CMat) -> CMat {
    let n = x.nrows();
    CMat::from_fn(n, n, |j, k| {
        if j == k {
            Complex64::default()
        } else {
            x[(j, k)]
        }
    })
}

pub fn hermitize(x: &CMat) -> CMat {
    (x + x.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Element of i u(n): the dynamical "spin" variable.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    m: CMat,
}

impl HermitianMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        check_square(&m)?;
        let residual = max_entry_norm(&(&m - m.adjoint())) / 2.0;
        if residual > SYMMETRIZE_LIMIT {
            return Err(Error::NotHermitian {
                residual,
                limit: SYMMETRIZE_LIMIT,
            });
        }
        Ok(Self { m: hermitize(&m) })
    }

    pub fn from_real_diag(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            m: CMat::from_fn(n, n, |j, k| {
                if j == k {
                    Complex64::new(values[j], 0.0)
                } else {
                    Complex64::default()
                }
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    /// L^m by repeated multiplication, re-Hermitized; L^0 is the identity.
    pub fn power(&self, m: u32) -> Self {
        if m == 0 {
            return Self {
                m: identity(self.dim()),
            };
        }
        let mut acc = self.m.clone();
        for _ in 1..m {
            acc = &acc * &self.m;
        }
        Self { m: hermitize(&acc) }
    }

    /// Real eigenvalues, sorted descending. Spectral oracle helper.
    pub fn eigenvalues_desc(&self) -> Vec<f64> {
        let eig = self.m.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vals
    }
}

/// Element of u(n).
#[derive(Debug, Clone, PartialEq)]
pub struct AntiHermitianMatrix {
    m: CMat,
}

impl AntiHermitianMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        check_square(&m)?;
        let residual = max_entry_norm(&(&m + m.adjoint())) / 2.0;
        if residual > SYMMETRIZE_LIMIT {
            return Err(Error::NotAntiHermitian {
                residual,
                limit: SYMMETRIZE_LIMIT,
            });
        }
        let skew = (&m - m.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(Self { m: skew })
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }
}

/// Real diagonal matrix diag(v_1..v_n), an element of A.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDiagonal {
    values: Vec<f64>,
}

impl RealDiagonal {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn matrix(&self) -> CMat {
        let n = self.values.len();
        CMat::from_fn(n, n, |j, k| {
            if j == k {
                Complex64::new(self.values[j], 0.0)
            } else {
                Complex64::default()
            }
        })
    }
}

/// Point of the open Weyl alcove: strictly decreasing real diagonal with a
/// hard gap.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularRealDiagonal {
    values: Vec<f64>,
    min_gap: f64,
}

impl RegularRealDiagonal {
    pub fn new(values: Vec<f64>, min_gap: f64) -> Result<Self> {
        assert!(min_gap > 0.0);
        for j in 0..values.len() {
            for k in (j + 1)..values.len() {
                let gap = values[j] - values[k];
                if gap < min_gap {
                    return Err(Error::RegularityViolation { gap, min_gap, j, k });
                }
            }
        }
        Ok(Self { values, min_gap })
    }

    pub fn with_default_gap(values: Vec<f64>) -> Result<Self> {
        Self::new(values, MIN_GAP_DEFAULT)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn matrix(&self) -> CMat {
        RealDiagonal::new(self.values.clone()).matrix()
    }

    /// exp(q) as a diagonal matrix.
    pub fn exp_matrix(&self) -> CMat {
        let n = self.values.len();
        CMat::from_fn(n, n, |j, k| {
            if j == k {
                Complex64::new(self.values[j].exp(), 0.0)
            } else {
                Complex64::default()
            }
        })
    }
}

/// Complex diagonal with strictly decreasing real parts (element of H deg).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexDiagonal {
    values: Vec<Complex64>,
    min_gap: f64,
}

impl ComplexDiagonal {
    pub fn new(values: Vec<Complex64>, min_gap: f64) -> Result<Self> {
        let real: Vec<f64> = values.iter().map(|z| z.re).collect();
        RegularRealDiagonal::new(real, min_gap)?;
        Ok(Self { values, min_gap })
    }

    pub fn from_regular(q: &RegularRealDiagonal) -> Self {
        Self {
            values: q.values().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            min_gap: q.min_gap(),
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn real_part(&self) -> Result<RegularRealDiagonal> {
        RegularRealDiagonal::new(self.values.iter().map(|z| z.re).collect(), self.min_gap)
    }
}

/// Diagonal unitary diag(e^{i theta_1}, ..., e^{i theta_n}).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagonal {
    phases: Vec<f64>,
}

impl PhaseDiagonal {
    pub fn new(phases: Vec<f64>) -> Self {
        Self { phases }
    }

    pub fn matrix(&self) -> CMat {
        let n = self.phases.len();
        CMat::from_fn(n, n, |j, k| {
            if j == k {
                Complex64::from_polar(1.0, self.phases[j])
            } else {
                Complex64::default()
            }
        })
    }
}

/// Matrix exponential by scaling and squaring with a fixed-degree Taylor
/// kernel.
pub fn mat_exp(x: &CMat) -> CMat {
    let n = x.nrows();
    let norm = x.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = Complex64::new(0.5f64.powi(s), 0.0);
    let xs = x * scale;
    // Taylor to degree 18: remainder < (0.5)^19/19! at this scaling.
    let mut term = identity(n);
    let mut acc = identity(n);
    for k in 1..=18u32 {
        term = &term * &xs * Complex64::new(1.0 / k as f64, 0.0);
        acc += &term;
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    acc
}

/// Ordered decomposition g = etaL^{-1} e^{q} etaR with q strictly decreasing.
///
/// The residual diagonal-torus ambiguity is fixed by making the first entry
/// of maximal modulus in each right-singular column real positive.
pub fn ordered_svd(g: &CMat, min_gap: f64) -> Result<(CMat, RegularRealDiagonal, CMat)> {
    let n = check_square(g)?;
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let vt = svd.v_t.as_ref().expect("svd requested v_t");

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });

    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    if sigma[n - 1] <= INV_TOL {
        return Err(Error::NotInvertible {
            sigma_min: sigma[n - 1],
        });
    }
    let logs: Vec<f64> = sigma.iter().map(|s| s.ln()).collect();
    for j in 0..n - 1 {
        let gap = logs[j] - logs[j + 1];
        if gap < min_gap {
            return Err(Error::SingularValueCollision { gap, min_gap });
        }
    }

    // Columns of u / rows of vt reordered to descending singular values.
    let mut u_ord = CMat::zeros(n, n);
    let mut vt_ord = CMat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            u_ord[(r, new)] = u[(r, old)];
            vt_ord[(new, r)] = vt[(old, r)];
        }
    }

    // Phase convention: first maximal-modulus entry of each right-singular
    // column (row of vt) made real positive.
    for j in 0..n {
        let mut best = 0;
        let mut best_norm = 0.0;
        for r in 0..n {
            let m = vt_ord[(j, r)].norm();
            if m > best_norm + 1e-12 {
                best_norm = m;
                best = r;
            }
        }
        let pivot = vt_ord[(j, best)];
        if pivot.norm() > 0.0 {
            let phase = pivot / Complex64::new(pivot.norm(), 0.0);
            let adj = phase.conj();
            for r in 0..n {
                vt_ord[(j, r)] *= adj;
            }
            for r in 0..n {
                u_ord[(r, j)] *= phase;
            }
        }
    }

    // g = U Sigma V^dagger = etaL^{-1} e^q etaR with etaL = U^dagger, etaR = V^dagger.
    let q = RegularRealDiagonal::new(logs, min_gap)?;
    let eta_l = u_ord.adjoint();
    let eta_r = vt_ord;
    Ok((eta_l, q, eta_r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pairing_identity() {
        let i2 = identity(2);
        assert_relative_eq!(pairing(&i2, &i2).unwrap(), 2.0);
    }

    #[test]
    fn pairing_imaginary_diagonals() {
        let x = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(0.0, 1.0),
            c(0.0, -1.0),
        ]));
        let y = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0, 1.0), c(0.0, 1.0)]));
        assert_relative_eq!(pairing(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn pairing_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = sampling::random_complex_matrix(3, &mut rng);
        let y = sampling::random_complex_matrix(3, &mut rng);
        let mut oracle = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                oracle += (x[(j, k)] * y[(k, j)]).re;
            }
        }
        assert_relative_eq!(pairing(&x, &y).unwrap(), oracle, epsilon = 1e-13);
    }

    #[test]
    fn pairing_dimension_mismatch() {
        let x = identity(2);
        let y = identity(3);
        assert!(matches!(
            pairing(&x, &y),
            Err(Error::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn project_hermitian_has_no_g_part() {
        let x = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        assert!(max_entry_norm(&project(&x, Part::G)) < 1e-15);
    }

    #[test]
    fn project_splits_antihermitian() {
        let x = CMat::from_row_slice(2, 2, &[c(0.0, 1.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 1.0)]);
        let t = project(&x, Part::T);
        let tp = project(&x, Part::TPerp);
        assert!(
            max_entry_norm(
                &(&t - CMat::from_row_slice(
                    2,
                    2,
                    &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]
                ))
            ) < 1e-15
        );
        assert!(
            max_entry_norm(
                &(&tp
                    - CMat::from_row_slice(
                        2,
                        2,
                        &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]
                    ))
            ) < 1e-15
        );
    }

    #[test]
    fn projections_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = sampling::random_complex_matrix(4, &mut rng);
        let sum = project(&x, Part::T)
            + project(&x, Part::TPerp)
            + project(&x, Part::A)
            + project(&x, Part::APerp);
        assert!(max_entry_norm(&(&sum - &x)) < 1e-14);
    }

    #[test]
    fn projections_pairwise_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = sampling::random_complex_matrix(3, &mut rng);
        let y = sampling::random_complex_matrix(3, &mut rng);
        let parts = [Part::T, Part::TPerp, Part::A, Part::APerp];
        for (i, &pa) in parts.iter().enumerate() {
            for (j, &pb) in parts.iter().enumerate() {
                if i != j {
                    let val = pairing(&project(&x, pa), &project(&y, pb)).unwrap();
                    assert!(val.abs() < 1e-12, "parts {:?},{:?}: {}", pa, pb, val);
                }
            }
        }
    }

    #[test]
    fn pairing_ad_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = sampling::random_complex_matrix(3, &mut rng);
            let y = sampling::random_complex_matrix(3, &mut rng);
            let z = sampling::random_complex_matrix(3, &mut rng);
            let lhs = pairing(&commutator(&z, &x), &y).unwrap()
                + pairing(&x, &commutator(&z, &y)).unwrap();
            assert!(
                lhs.abs()
                    < 1e-12 * (1.0 + max_entry_norm(&x) * max_entry_norm(&y) * max_entry_norm(&z))
            );
        }
    }

    #[test]
    fn power_diagonal() {
        let l = HermitianMatrix::from_real_diag(&[2.0, 1.0]);
        let p = l.power(3);
        assert_relative_eq!(p.matrix()[(0, 0)].re, 8.0);
        assert_relative_eq!(p.matrix()[(1, 1)].re, 1.0);
    }

    #[test]
    fn power_involution() {
        let l = HermitianMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ))
        .unwrap();
        let p = l.power(2);
        assert!(max_entry_norm(&(p.matrix() - identity(2))) < 1e-15);
    }

    #[test]
    fn power_matches_spectral_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let l = sampling::random_hermitian(3, &mut rng);
        let p = l.power(4);
        // Spectral route: diagonalize and raise eigenvalues.
        let eig = l.matrix().clone().symmetric_eigen();
        let mut d = CMat::zeros(3, 3);
        for j in 0..3 {
            d[(j, j)] = Complex64::new(eig.eigenvalues[j].powi(4), 0.0);
        }
        let spectral = &eig.eigenvectors * d * eig.eigenvectors.adjoint();
        assert!(max_entry_norm(&(p.matrix() - spectral)) < 1e-12);
    }

    #[test]
    fn exp_zero_and_diagonal() {
        assert!(max_entry_norm(&(mat_exp(&zeros(3)) - identity(3))) < 1e-15);
        let x = HermitianMatrix::from_real_diag(&[1.0, -1.0]);
        let e = mat_exp(x.matrix());
        assert_relative_eq!(e[(0, 0)].re, 1f64.exp(), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 1)].re, (-1f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn exp_matches_spectral_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let l = sampling::random_hermitian(3, &mut rng);
        let e = mat_exp(l.matrix());
        let eig = l.matrix().clone().symmetric_eigen();
        let mut d = CMat::zeros(3, 3);
        for j in 0..3 {
            d[(j, j)] = Complex64::new(eig.eigenvalues[j].exp(), 0.0);
        }
        let spectral = &eig.eigenvectors * d * eig.eigenvectors.adjoint();
        assert!(max_entry_norm(&(&e - spectral)) < 1e-12);
    }

    #[test]
    fn exp_inverse_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let x = sampling::random_complex_matrix(4, &mut rng) * c(2.0, 0.0);
            let prod = mat_exp(&x) * mat_exp(&(-&x));
            assert!(max_entry_norm(&(prod - identity(4))) < 1e-10);
        }
    }

    #[test]
    fn ordered_svd_already_decomposed() {
        let q0 = RegularRealDiagonal::with_default_gap(vec![1.0, 0.0]).unwrap();
        let g = q0.exp_matrix();
        let (eta_l, q, eta_r) = ordered_svd(&g, MIN_GAP_DEFAULT).unwrap();
        assert!(max_entry_norm(&(&eta_l - identity(2))) < 1e-12);
        assert!(max_entry_norm(&(&eta_r - identity(2))) < 1e-12);
        assert_relative_eq!(q.values()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(q.values()[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ordered_svd_construct_then_decompose() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u = sampling::random_unitary(3, &mut rng);
        let v = sampling::random_unitary(3, &mut rng);
        let q0 = RegularRealDiagonal::with_default_gap(vec![2.0, 0.0, -1.0]).unwrap();
        let g = &u * q0.exp_matrix() * &v;
        let (eta_l, q, eta_r) = ordered_svd(&g, MIN_GAP_DEFAULT).unwrap();
        for (a, b) in q.values().iter().zip(q0.values()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
        let recon = eta_l.clone().try_inverse().unwrap() * q.exp_matrix() * eta_r;
        assert!(max_entry_norm(&(recon - g)) < 1e-10);
    }

    #[test]
    fn ordered_svd_collision() {
        let g = identity(2) * c(2.0, 0.0);
        assert!(matches!(
            ordered_svd(&g, MIN_GAP_DEFAULT),
            Err(Error::SingularValueCollision { .. })
        ));
    }

    #[test]
    fn ordered_svd_reconstruction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let g = sampling::random_complex_matrix(5, &mut rng) + identity(5) * c(3.0, 0.0);
            match ordered_svd(&g, MIN_GAP_DEFAULT) {
                Ok((eta_l, q, eta_r)) => {
                    let recon = eta_l.clone().try_inverse().unwrap() * q.exp_matrix() * eta_r;
                    assert!(max_entry_norm(&(recon - g)) < 1e-10);
                }
                Err(Error::SingularValueCollision { .. }) => {}
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn hermitian_constructor_rejects_large_residual() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(HermitianMatrix::new(m).is_err());
    }

    #[test]
    fn regular_diagonal_rejects_small_gap() {
        assert!(RegularRealDiagonal::with_default_gap(vec![1.0, 1.0 - 1e-9]).is_err());
        assert!(RegularRealDiagonal::with_default_gap(vec![1.0, 0.0, -1.0]).is_ok());
    }
}
