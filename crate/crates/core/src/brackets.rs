//! Poisson bracket evaluators for the reduced phase space: the two reduced
//! brackets, the bracket on the extended space of (w, L) pairs, the
//! pre-reduction bracket on (q, L, xi_T) triples, the derived bracket of the
//! derivation D, the bracket pencil, and the Jacobi / compatibility /
//! exactness residual checkers.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    commutator, identity, pairing, project, zeros, CMat, ComplexDiagonal, HermitianMatrix, Part,
    RegularRealDiagonal,
};
use crate::observables::{hermitian_basis, Observable};
use crate::rmatrix::{apply_r, apply_r_real, apply_sinh_inv, r_bracket};

/// Step for outer derivatives of bracket-value functions. They are taken
/// with fourth-order central stencils, so the truncation error sits well
/// below the 1e-5/1e-6 acceptance budget.
pub const FD_STEP: f64 = 1e-3;

/// Reduced phase-space point (q, L).
#[derive(Debug, Clone)]
pub struct StatePoint {
    pub q: RegularRealDiagonal,
    pub l: HermitianMatrix,
}

impl StatePoint {
    pub fn new(q: RegularRealDiagonal, l: HermitianMatrix) -> Self {
        assert_eq!(q.dim(), l.dim());
        Self { q, l }
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }
}

/// Pre-reduction point (w, L) with w in the complexified alcove.
#[derive(Debug, Clone)]
pub struct ExtendedStatePoint {
    pub w: ComplexDiagonal,
    pub l: HermitianMatrix,
}

/// Pre-reduction point (q, L, xi_T) with xi_T anti-Hermitian diagonal.
#[derive(Debug, Clone)]
pub struct TripleStatePoint {
    pub q: RegularRealDiagonal,
    pub l: HermitianMatrix,
    pub xi_t: CMat,
}

impl TripleStatePoint {
    pub fn new(q: RegularRealDiagonal, l: HermitianMatrix, xi_t: CMat) -> Result<Self> {
        for j in 0..xi_t.nrows() {
            for k in 0..xi_t.ncols() {
                let z = xi_t[(j, k)];
                let bad = if j == k { z.re.abs() } else { z.norm() };
                if bad > 1e-12 {
                    return Err(Error::NotAntiHermitian {
                        residual: bad,
                        limit: 1e-12,
                    });
                }
            }
        }
        Ok(Self { q, l, xi_t })
    }
}

/// Bracket selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BracketKind {
    B1,
    B2,
    PairSpace,
    Extended,
    DerivedOfB2,
    Pencil { x: f64, y: f64 },
    TripleSpace,
}

/// Gradient data of a scalar function of (q, L).
#[derive(Debug, Clone)]
pub struct Grad2 {
    pub dq: Vec<f64>,
    pub dl: CMat,
}

/// Anything the bracket evaluators can differentiate: DSL observables
/// (analytic gradients) or opaque scalar functions (finite-difference
/// gradients).
pub trait StateFunction: Sync {
    fn eval(&self, q: &[f64], l: &CMat) -> Result<f64>;
    fn grads(&self, q: &[f64], l: &CMat) -> Result<Grad2>;

    /// D[F] = <1_n, grad2 F>.
    fn derivation_d(&self, q: &[f64], l: &CMat) -> Result<f64> {
        let g = self.grads(q, l)?;
        Ok(g.dl.diagonal().iter().map(|z| z.re).sum())
    }
}

impl StateFunction for Observable {
    fn eval(&self, q: &[f64], l: &CMat) -> Result<f64> {
        self.evaluate_raw(q, l)
    }

    fn grads(&self, q: &[f64], l: &CMat) -> Result<Grad2> {
        let g = self.gradients_raw(q, l)?;
        Ok(Grad2 {
            dq: g.grad1.values().to_vec(),
            dl: g.grad2.matrix().clone(),
        })
    }

    fn derivation_d(&self, q: &[f64], l: &CMat) -> Result<f64> {
        self.apply_derivation_d_raw(q, l)
    }
}

/// Fourth-order central difference of g at 0.
pub fn central4(g: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((-g(2.0 * h)? + 8.0 * g(h)? - 8.0 * g(-h)? + g(-2.0 * h)?) / (12.0 * h))
}

/// Scalar function of (q, L) with finite-difference gradients; used for
/// bracket-value functions, which are not closed in the DSL.
pub struct FdScalar<'a> {
    f: Box<dyn Fn(&[f64], &CMat) -> Result<f64> + Sync + 'a>,
    step: f64,
}

impl<'a> FdScalar<'a> {
    pub fn new(f: impl Fn(&[f64], &CMat) -> Result<f64> + Sync + 'a) -> Self {
        Self {
            f: Box::new(f),
            step: FD_STEP,
        }
    }
}

impl StateFunction for FdScalar<'_> {
    fn eval(&self, q: &[f64], l: &CMat) -> Result<f64> {
        (self.f)(q, l)
    }

    fn grads(&self, q: &[f64], l: &CMat) -> Result<Grad2> {
        let n = l.nrows();
        let mut dq = vec![0.0; q.len()];
        for j in 0..q.len() {
            dq[j] = central4(
                |t| {
                    let mut qs = q.to_vec();
                    qs[j] += t;
                    (self.f)(&qs, l)
                },
                self.step,
            )?;
        }
        let mut dl = zeros(n);
        for z in hermitian_basis(n) {
            let d = central4(
                |t| {
                    let ls = l + &z * Complex64::new(t, 0.0);
                    (self.f)(q, &ls)
                },
                self.step,
            )?;
            dl += z * Complex64::new(d, 0.0);
        }
        Ok(Grad2 { dq, dl })
    }

    fn derivation_d(&self, q: &[f64], l: &CMat) -> Result<f64> {
        let n = l.nrows();
        central4(
            |t| {
                let ls = l + identity(n) * Complex64::new(t, 0.0);
                (self.f)(q, &ls)
            },
            self.step,
        )
    }
}

fn diag_pairing(dq: &[f64], m: &CMat) -> f64 {
    dq.iter().enumerate().map(|(j, &v)| v * m[(j, j)].re).sum()
}

/// {F,H}_2 from gradient data.
pub fn bracket2_grads(q: &RegularRealDiagonal, l: &CMat, gf: &Grad2, gh: &Grad2) -> Result<f64> {
    let lgf = l * &gf.dl;
    let lgh = l * &gh.dl;
    let term1 = diag_pairing(&gf.dq, &lgh);
    let term2 = diag_pairing(&gh.dq, &lgf);
    let term3 = pairing(&apply_r_real(q, &lgf)?, &lgh)?;
    Ok(term1 - term2 - 2.0 * term3)
}

/// {F,H}_1 from gradient data.
pub fn bracket1_grads(q: &RegularRealDiagonal, l: &CMat, gf: &Grad2, gh: &Grad2) -> Result<f64> {
    let term1 = diag_pairing(&gf.dq, &gh.dl);
    let term2 = diag_pairing(&gh.dq, &gf.dl);
    let term3 = pairing(l, &r_bracket(q, &gf.dl, &gh.dl)?)?;
    Ok(term1 - term2 + term3)
}

pub fn bracket2(f: &dyn StateFunction, h: &dyn StateFunction, p: &StatePoint) -> Result<f64> {
    let gf = f.grads(p.q.values(), p.l.matrix())?;
    let gh = h.grads(p.q.values(), p.l.matrix())?;
    bracket2_grads(&p.q, p.l.matrix(), &gf, &gh)
}

pub fn bracket1(f: &dyn StateFunction, h: &dyn StateFunction, p: &StatePoint) -> Result<f64> {
    let gf = f.grads(p.q.values(), p.l.matrix())?;
    let gh = h.grads(p.q.values(), p.l.matrix())?;
    bracket1_grads(&p.q, p.l.matrix(), &gf, &gh)
}

/// The derived bracket {F,H}^D = D[{F,H}_2] - {D F, H}_2 - {F, D H}_2.
///
/// The outer D differentiates the bracket-value function along L + t 1_n;
/// the inner terms wrap the analytic derivation values in FD-gradient
/// scalars.
pub fn bracket_derived(
    f: &dyn StateFunction,
    h: &dyn StateFunction,
    p: &StatePoint,
) -> Result<f64> {
    let n = p.dim();
    let q = &p.q;
    let outer = central4(
        |t| {
            let ls = p.l.matrix() + identity(n) * Complex64::new(t, 0.0);
            let gf = f.grads(q.values(), &ls)?;
            let gh = h.grads(q.values(), &ls)?;
            bracket2_grads(q, &ls, &gf, &gh)
        },
        FD_STEP,
    )?;

    let df = FdScalar::new(|qs: &[f64], ls: &CMat| f.derivation_d(qs, ls));
    let dh = FdScalar::new(|qs: &[f64], ls: &CMat| h.derivation_d(qs, ls));
    let term_f = bracket2(&df, h, p)?;
    let term_h = bracket2(f, &dh, p)?;
    Ok(outer - term_f - term_h)
}

/// {F,H}_{x,y} = x {F,H}_2 + y {F,H}^D.
pub fn pencil(
    x: f64,
    y: f64,
    f: &dyn StateFunction,
    h: &dyn StateFunction,
    p: &StatePoint,
) -> Result<f64> {
    Ok(x * bracket2(f, h, p)? + y * bracket_derived(f, h, p)?)
}

/// Dispatch for the state-point bracket kinds.
pub fn bracket_value(
    kind: BracketKind,
    f: &dyn StateFunction,
    h: &dyn StateFunction,
    p: &StatePoint,
) -> Result<f64> {
    match kind {
        BracketKind::B1 => bracket1(f, h, p),
        BracketKind::B2 => bracket2(f, h, p),
        BracketKind::DerivedOfB2 => bracket_derived(f, h, p),
        BracketKind::Pencil { x, y } => pencil(x, y, f, h, p),
        BracketKind::PairSpace | BracketKind::Extended | BracketKind::TripleSpace => Err(
            Error::Config(format!("{kind:?} is not a bracket on (q, L) state points")),
        ),
    }
}

/// |{{F,G},H} + {{G,H},F} + {{H,F},G}| with the outer brackets
/// differentiating the inner bracket-value functions by finite differences.
pub fn jacobi_residual(
    kind: BracketKind,
    f: &dyn StateFunction,
    g: &dyn StateFunction,
    h: &dyn StateFunction,
    p: &StatePoint,
) -> Result<f64> {
    let term =
        |a: &dyn StateFunction, b: &dyn StateFunction, c: &dyn StateFunction| -> Result<f64> {
            let inner = FdScalar::new(|qs: &[f64], ls: &CMat| {
                let q = RegularRealDiagonal::new(qs.to_vec(), p.q.min_gap())?;
                let l = HermitianMatrix::new(ls.clone())?;
                bracket_value(kind, a, b, &StatePoint::new(q, l))
            });
            bracket_value(kind, &inner, c, p)
        };
    let sum = term(f, g, h)? + term(g, h, f)? + term(h, f, g)?;
    Ok(sum.abs())
}

/// |D[{F,H}_1] - {D F, H}_1 - {F, D H}_1| (the exactness relation).
pub fn exactness_residual(
    f: &dyn StateFunction,
    h: &dyn StateFunction,
    p: &StatePoint,
) -> Result<f64> {
    let n = p.dim();
    let q = &p.q;
    let outer = central4(
        |t| {
            let ls = p.l.matrix() + identity(n) * Complex64::new(t, 0.0);
            let gf = f.grads(q.values(), &ls)?;
            let gh = h.grads(q.values(), &ls)?;
            bracket1_grads(q, &ls, &gf, &gh)
        },
        FD_STEP,
    )?;
    let df = FdScalar::new(|qs: &[f64], ls: &CMat| f.derivation_d(qs, ls));
    let dh = FdScalar::new(|qs: &[f64], ls: &CMat| h.derivation_d(qs, ls));
    let term_f = bracket1(&df, h, p)?;
    let term_h = bracket1(f, &dh, p)?;
    Ok((outer - term_f - term_h).abs())
}

// ---------------------------------------------------------------------------
// Bracket on the extended space of (w, L) pairs.
// ---------------------------------------------------------------------------

/// Function on (w, L): either a trivially extended gauge invariant, which
/// only sees the real part of w, or a coordinate function <w, X> with X in T.
#[derive(Debug, Clone)]
pub enum ExtObservable {
    Invariant(Observable),
    /// <w, X> for anti-Hermitian diagonal X (stored as the diagonal of X).
    CoordW(Vec<Complex64>),
}

impl ExtObservable {
    pub fn coord_w(x_diag: Vec<Complex64>) -> Result<Self> {
        for z in &x_diag {
            if z.re.abs() > 1e-12 {
                return Err(Error::NotAntiHermitian {
                    residual: z.re.abs(),
                    limit: 1e-12,
                });
            }
        }
        Ok(Self::CoordW(x_diag))
    }

    pub fn eval(&self, p: &ExtendedStatePoint) -> Result<f64> {
        match self {
            Self::Invariant(f) => {
                let q: Vec<f64> = p.w.values().iter().map(|z| z.re).collect();
                f.evaluate_raw(&q, p.l.matrix())
            }
            Self::CoordW(x) => Ok(p.w.values().iter().zip(x).map(|(w, x)| (w * x).re).sum()),
        }
    }

    /// (nabla_1 in H as a complex diagonal, nabla_2 Hermitian).
    fn grads(&self, p: &ExtendedStatePoint) -> Result<(Vec<Complex64>, CMat)> {
        match self {
            Self::Invariant(f) => {
                let q: Vec<f64> = p.w.values().iter().map(|z| z.re).collect();
                let g = f.gradients_raw(&q, p.l.matrix())?;
                let d1 = g
                    .grad1
                    .values()
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                Ok((d1, g.grad2.matrix().clone()))
            }
            Self::CoordW(x) => Ok((x.clone(), zeros(p.l.dim()))),
        }
    }
}

/// The bracket on (w, L) pairs; restricts to {,}_2 on the real slice.
pub fn bracket_pair(f: &ExtObservable, h: &ExtObservable, p: &ExtendedStatePoint) -> Result<f64> {
    let (f1, f2) = f.grads(p)?;
    let (h1, h2) = h.grads(p)?;
    let l = p.l.matrix();
    let lf2 = l * &f2;
    let lh2 = l * &h2;
    let term1: f64 = f1
        .iter()
        .enumerate()
        .map(|(j, z)| (z * lh2[(j, j)]).re)
        .sum();
    let term2: f64 = h1
        .iter()
        .enumerate()
        .map(|(j, z)| (z * lf2[(j, j)]).re)
        .sum();
    let term3 = pairing(&apply_r(&p.w, &lf2)?, &lh2)?;
    Ok(term1 - term2 - 2.0 * term3)
}

/// phi(w, L) = -2 Im(w), the moment map of the diagonal-torus action.
pub fn moment_map_phi(p: &ExtendedStatePoint) -> Vec<f64> {
    p.w.values().iter().map(|z| -2.0 * z.im).collect()
}

// ---------------------------------------------------------------------------
// The bracket on triples (u, L, u^dagger) and its correspondence with the
// bracket on (w, L) pairs.
// ---------------------------------------------------------------------------

fn apply_r_half(u: &[Complex64], x: &CMat) -> CMat {
    let n = x.nrows();
    let mut y = zeros(n);
    for j in 0..n {
        for k in 0..n {
            if j != k {
                let z = (u[j] - u[k]) * Complex64::new(0.5, 0.0);
                y[(j, k)] = -Complex64::new(0.5, 0.0) * (z.cosh() / z.sinh()) * x[(j, k)];
            }
        }
    }
    y
}

/// The triple-space bracket -2<d1 f, Dh> + 2<d1 h, Df> - 2<R(u) Df, Dh> at
/// (2w, L, 2w^dagger), with the derivatives of f and h mapped from the
/// gradients of F and H: Df = L grad2 F, d1 f = grad1 F / 4.
pub fn triple_bracket(f: &ExtObservable, h: &ExtObservable, p: &ExtendedStatePoint) -> Result<f64> {
    let (f1, f2) = f.grads(p)?;
    let (h1, h2) = h.grads(p)?;
    let l = p.l.matrix();
    let df = l * &f2;
    let dh = l * &h2;
    let u: Vec<Complex64> = p.w.values().iter().map(|z| 2.0 * z).collect();
    let quarter = 0.25;
    let term1: f64 = f1
        .iter()
        .enumerate()
        .map(|(j, z)| (z * dh[(j, j)]).re)
        .sum::<f64>()
        * quarter;
    let term2: f64 = h1
        .iter()
        .enumerate()
        .map(|(j, z)| (z * df[(j, j)]).re)
        .sum::<f64>()
        * quarter;
    let term3 = pairing(&apply_r_half(&u, &df), &dh)?;
    Ok(-2.0 * term1 + 2.0 * term2 - 2.0 * term3)
}

/// |{f,h}(2w,L,2w^dagger) + (1/2){F,H}(w,L)| with the second term the
/// pair-space bracket; expected at rounding level.
pub fn pair_triple_correspondence(
    f: &ExtObservable,
    h: &ExtObservable,
    p: &ExtendedStatePoint,
) -> Result<f64> {
    let lhs = triple_bracket(f, h, p)?;
    let rhs = bracket_pair(f, h, p)?;
    Ok((lhs + 0.5 * rhs).abs())
}

// ---------------------------------------------------------------------------
// The pre-reduction bracket on (q, L, xi_T) triples.
// ---------------------------------------------------------------------------

/// Function on (q, L, xi_T).
#[derive(Debug, Clone)]
pub enum TripleObservable {
    Invariant(Observable),
    /// q^X = <X, q> for real diagonal X.
    CoordQ(Vec<f64>),
    /// L^Z = <Z, L> for Hermitian Z.
    CoordL(CMat),
    /// xi^T = <T, xi> for anti-Hermitian diagonal T.
    CoordXi(CMat),
}

/// Gradient data of a function on (q, L, xi_T).
#[derive(Debug, Clone)]
pub struct Grad3 {
    pub dq: Vec<f64>,
    pub dl: CMat,
    pub dxi: CMat,
}

impl TripleObservable {
    pub fn eval(&self, p: &TripleStatePoint) -> Result<f64> {
        match self {
            Self::Invariant(f) => f.evaluate_raw(p.q.values(), p.l.matrix()),
            Self::CoordQ(x) => Ok(x.iter().zip(p.q.values()).map(|(a, b)| a * b).sum()),
            Self::CoordL(z) => pairing(z, p.l.matrix()),
            Self::CoordXi(t) => pairing(t, &p.xi_t),
        }
    }

    pub fn grads(&self, p: &TripleStatePoint) -> Result<Grad3> {
        let n = p.l.dim();
        match self {
            Self::Invariant(f) => {
                let g = f.gradients_raw(p.q.values(), p.l.matrix())?;
                Ok(Grad3 {
                    dq: g.grad1.values().to_vec(),
                    dl: g.grad2.matrix().clone(),
                    dxi: zeros(n),
                })
            }
            Self::CoordQ(x) => Ok(Grad3 {
                dq: x.clone(),
                dl: zeros(n),
                dxi: zeros(n),
            }),
            Self::CoordL(z) => Ok(Grad3 {
                dq: vec![0.0; n],
                dl: z.clone(),
                dxi: zeros(n),
            }),
            Self::CoordXi(t) => Ok(Grad3 {
                dq: vec![0.0; n],
                dl: zeros(n),
                dxi: t.clone(),
            }),
        }
    }
}

/// The bivector assembled from the coordinate relations
///   {q^X, L^Z} = <X,Z>,
///   {L^Z, xi^T} = <L, [T,Z]>,
///   {L^Z1, L^Z2} = <L, [Z1,Z2]_{R(q)}>
///                  + <xi_T, [W(ad_q) offdiag(Z1), W(ad_q) offdiag(Z2)]>,
/// with all brackets among functions of q and xi_T equal to zero.
pub fn bracket_extended_grads(p: &TripleStatePoint, gf: &Grad3, gh: &Grad3) -> Result<f64> {
    let l = p.l.matrix();
    let canonical = diag_pairing(&gf.dq, &gh.dl) - diag_pairing(&gh.dq, &gf.dl);
    let r_term = pairing(l, &r_bracket(&p.q, &gf.dl, &gh.dl)?)?;
    let wf = apply_sinh_inv(&p.q, &project(&gf.dl, Part::APerp))?;
    let wh = apply_sinh_inv(&p.q, &project(&gh.dl, Part::APerp))?;
    let xi_term = pairing(&p.xi_t, &commutator(&wf, &wh))?;
    let cross =
        pairing(l, &commutator(&gh.dxi, &gf.dl))? - pairing(l, &commutator(&gf.dxi, &gh.dl))?;
    Ok(canonical + r_term + xi_term + cross)
}

pub fn bracket_extended(
    f: &TripleObservable,
    h: &TripleObservable,
    p: &TripleStatePoint,
) -> Result<f64> {
    let gf = f.grads(p)?;
    let gh = h.grads(p)?;
    bracket_extended_grads(p, &gf, &gh)
}

/// Jacobi residual for the extended bracket, with outer derivatives over
/// (q, L, xi_T) taken by finite differences.
pub fn jacobi_residual_extended(
    f: &TripleObservable,
    g: &TripleObservable,
    h: &TripleObservable,
    p: &TripleStatePoint,
) -> Result<f64> {
    let term = |a: &TripleObservable, b: &TripleObservable, c: &TripleObservable| -> Result<f64> {
        let inner_grads = triple_fd_grads(|pt: &TripleStatePoint| bracket_extended(a, b, pt), p)?;
        let gc = c.grads(p)?;
        bracket_extended_grads(p, &inner_grads, &gc)
    };
    let sum = term(f, g, h)? + term(g, h, f)? + term(h, f, g)?;
    Ok(sum.abs())
}

fn triple_fd_grads(
    f: impl Fn(&TripleStatePoint) -> Result<f64>,
    p: &TripleStatePoint,
) -> Result<Grad3> {
    let n = p.l.dim();
    let h = FD_STEP;
    let mut dq = vec![0.0; n];
    for j in 0..n {
        dq[j] = central4(
            |t| {
                let mut qs = p.q.values().to_vec();
                qs[j] += t;
                let q = RegularRealDiagonal::new(qs, p.q.min_gap())?;
                f(&TripleStatePoint {
                    q,
                    l: p.l.clone(),
                    xi_t: p.xi_t.clone(),
                })
            },
            h,
        )?;
    }
    let mut dl = zeros(n);
    for z in hermitian_basis(n) {
        let d = central4(
            |t| {
                let ls = HermitianMatrix::new(p.l.matrix() + &z * Complex64::new(t, 0.0))?;
                f(&TripleStatePoint {
                    q: p.q.clone(),
                    l: ls,
                    xi_t: p.xi_t.clone(),
                })
            },
            h,
        )?;
        dl += z * Complex64::new(d, 0.0);
    }
    let mut dxi = zeros(n);
    for a in 0..n {
        let mut t_a = zeros(n);
        t_a[(a, a)] = Complex64::new(0.0, 1.0);
        let d = central4(
            |t| {
                let xi = &p.xi_t + &t_a * Complex64::new(t, 0.0);
                f(&TripleStatePoint {
                    q: p.q.clone(),
                    l: p.l.clone(),
                    xi_t: xi,
                })
            },
            h,
        )?;
        // dual of i E_aa under Re tr is -i E_aa
        dxi[(a, a)] += Complex64::new(0.0, -d);
    }
    Ok(Grad3 { dq, dl, dxi })
}
