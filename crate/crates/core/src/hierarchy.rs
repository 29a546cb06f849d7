//! The commuting hierarchy: vector fields V_m, fixed-step RK4 integration,
//! the projection-method exact flow, slice compensators, moment maps, and
//! flow-commutation diagnostics.

use num_complex::Complex64;

use crate::brackets::StatePoint;
use crate::error::{Error, Result};
use crate::linalg::{
    commutator, hermitize, mat_exp, max_entry_norm, project, AntiHermitianMatrix, CMat,
    HermitianMatrix, Part, RealDiagonal, RegularRealDiagonal,
};
use crate::rmatrix::{
    apply_cosh_offdiag, apply_r_real, apply_sinh, apply_sinh_inv, gauge_compensator_t,
};

/// Scale of the central-difference step used by the vector-field commutator;
/// second derivatives of coth amplify noise, so the residual budget is 1e-6.
pub const COMMUTATOR_FD_STEP: f64 = 1e-5;

/// Tangent vector at a state point.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub dq: RealDiagonal,
    pub dl: HermitianMatrix,
}

/// Point of the unreduced cotangent-bundle phase space (g, J, xi).
#[derive(Debug, Clone)]
pub struct UnreducedPoint {
    pub g: CMat,
    pub j: CMat,
    pub xi: AntiHermitianMatrix,
}

/// V_m[q] = diag(L^m), V_m[L] = [R(q) L^m, L].
pub fn vector_field(m: u32, p: &StatePoint) -> Result<TangentVector> {
    let lm = p.l.power(m);
    let dq: Vec<f64> = (0..p.dim()).map(|j| lm.matrix()[(j, j)].re).collect();
    let r_lm = apply_r_real(&p.q, lm.matrix())?;
    let dl = hermitize(&commutator(&r_lm, p.l.matrix()));
    Ok(TangentVector {
        dq: RealDiagonal::new(dq),
        dl: HermitianMatrix::new(dl)?,
    })
}

fn raw_field(m: u32, q: &[f64], l: &CMat, min_gap: f64, time: f64) -> Result<(Vec<f64>, CMat)> {
    let qr = RegularRealDiagonal::new(q.to_vec(), min_gap)
        .map_err(|_| Error::RegularityLost { time })?;
    let lh = HermitianMatrix::new(l.clone())?;
    let v = vector_field(m, &StatePoint::new(qr, lh))?;
    Ok((v.dq.values().to_vec(), v.dl.into_matrix()))
}

fn rk4_step(m: u32, q: &mut Vec<f64>, l: &mut CMat, min_gap: f64, time: f64, h: f64) -> Result<()> {
    let cplx = |x: f64| Complex64::new(x, 0.0);
    let (k1q, k1l) = raw_field(m, q, l, min_gap, time)?;
    let q2: Vec<f64> = q.iter().zip(&k1q).map(|(a, b)| a + 0.5 * h * b).collect();
    let l2 = &*l + &k1l * cplx(0.5 * h);
    let (k2q, k2l) = raw_field(m, &q2, &l2, min_gap, time + 0.5 * h)?;
    let q3: Vec<f64> = q.iter().zip(&k2q).map(|(a, b)| a + 0.5 * h * b).collect();
    let l3 = &*l + &k2l * cplx(0.5 * h);
    let (k3q, k3l) = raw_field(m, &q3, &l3, min_gap, time + 0.5 * h)?;
    let q4: Vec<f64> = q.iter().zip(&k3q).map(|(a, b)| a + h * b).collect();
    let l4 = &*l + &k3l * cplx(h);
    let (k4q, k4l) = raw_field(m, &q4, &l4, min_gap, time + h)?;
    for j in 0..q.len() {
        q[j] += h / 6.0 * (k1q[j] + 2.0 * k2q[j] + 2.0 * k3q[j] + k4q[j]);
    }
    *l += (k1l + (k2l + k3l) * cplx(2.0) + k4l) * cplx(h / 6.0);
    *l = hermitize(l);
    Ok(())
}

/// Classical fixed-step RK4 flow of V_m over [0, t].
pub fn integrate(m: u32, p0: &StatePoint, t: f64, steps: usize) -> Result<StatePoint> {
    Ok(integrate_path(m, p0, t, steps, steps.max(1))?
        .pop()
        .expect("path has at least the final point")
        .1)
}

/// RK4 flow recording the state every `record_every` steps (plus the final
/// state). The initial state is included as the first row.
pub fn integrate_path(
    m: u32,
    p0: &StatePoint,
    t: f64,
    steps: usize,
    record_every: usize,
) -> Result<Vec<(f64, StatePoint)>> {
    if steps < 1 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let min_gap = p0.q.min_gap();
    let h = t / steps as f64;
    let mut q = p0.q.values().to_vec();
    let mut l = p0.l.matrix().clone();
    let mut out = vec![(0.0, p0.clone())];
    for step in 0..steps {
        let time = step as f64 * h;
        rk4_step(m, &mut q, &mut l, min_gap, time, h)?;
        let now = (step + 1) as f64 * h;
        if (step + 1) % record_every.max(1) == 0 || step + 1 == steps {
            let qr = RegularRealDiagonal::new(q.clone(), min_gap)
                .map_err(|_| Error::RegularityLost { time: now })?;
            out.push((now, StatePoint::new(qr, HermitianMatrix::new(l.clone())?)));
        }
    }
    Ok(out)
}

/// Exact flow of V_m by the projection method: push g(t) = e^{q0} exp(t L0^m)
/// through the ordered decomposition and conjugate L0 back.
pub fn exact_flow(m: u32, p0: &StatePoint, t: f64) -> Result<StatePoint> {
    if t == 0.0 {
        return Ok(p0.clone());
    }
    let j = p0.l.matrix();
    let lm = p0.l.power(m).into_matrix();
    let g = p0.q.exp_matrix() * mat_exp(&(lm * Complex64::new(t, 0.0)));
    let (_eta_l, qt, eta_r) = crate::linalg::ordered_svd(&g, p0.q.min_gap())?;
    let lt = &eta_r * j * eta_r.adjoint();
    Ok(StatePoint::new(qt, HermitianMatrix::new(lt)?))
}

/// Compensators of the unreduced field with index m (which involves L^{m-1}):
/// Y^L = (sinh ad_q)^{-1}(offdiag-Hermitian part of L^{m-1}), Y^R = R(q) L^{m-1}.
pub fn slice_compensators(
    m: u32,
    p: &StatePoint,
) -> Result<(AntiHermitianMatrix, AntiHermitianMatrix)> {
    if m < 1 {
        return Err(Error::Config("compensator index must be at least 1".into()));
    }
    let lm1 = p.l.power(m - 1).into_matrix();
    let yl = apply_sinh_inv(&p.q, &project(&lm1, Part::APerp))?;
    let yr = apply_r_real(&p.q, &lm1)?;
    Ok((AntiHermitianMatrix::new(yl)?, AntiHermitianMatrix::new(yr)?))
}

/// Max entry norm of the non-diagonal-Hermitian part of
/// L^{m-1} - sinh ad_q(Y^L) + cosh ad_q(Y^L) - Y^R, the tangency condition of
/// the compensated field to the constraint slice.
pub fn tangency_residual(m: u32, p: &StatePoint) -> Result<f64> {
    let (yl, yr) = slice_compensators(m, p)?;
    let lm1 = p.l.power(m - 1).into_matrix();
    let combo =
        lm1 - apply_sinh(&p.q, yl.matrix()) + apply_cosh_offdiag(&p.q, yl.matrix()) - yr.matrix();
    let rest = &combo - project(&combo, Part::A);
    Ok(max_entry_norm(&rest))
}

/// (e^q, L, xi = -sinh ad_q(L)): the constraint-slice embedding.
pub fn build_unreduced(p: &StatePoint) -> Result<UnreducedPoint> {
    let xi = apply_sinh(&p.q, p.l.matrix()) * Complex64::new(-1.0, 0.0);
    Ok(UnreducedPoint {
        g: p.q.exp_matrix(),
        j: p.l.matrix().clone(),
        xi: AntiHermitianMatrix::new(xi)?,
    })
}

fn anti_hermitian_part(x: &CMat) -> CMat {
    (x - x.adjoint()) * Complex64::new(0.5, 0.0)
}

/// The two components (pi(g J g^{-1}) + xi, -pi(J)) of the unreduced moment
/// map, where pi is the anti-Hermitian projection; both vanish on the slice.
pub fn moment_map_phi_unreduced(u: &UnreducedPoint) -> Result<(CMat, CMat)> {
    let g_inv =
        u.g.clone()
            .try_inverse()
            .ok_or(Error::NotInvertible { sigma_min: 0.0 })?;
    let first = anti_hermitian_part(&(&u.g * &u.j * g_inv)) + u.xi.matrix();
    let second = anti_hermitian_part(&u.j) * Complex64::new(-1.0, 0.0);
    Ok((first, second))
}

fn shift_point(p: &StatePoint, v: &TangentVector, h: f64) -> Result<StatePoint> {
    let q: Vec<f64> =
        p.q.values()
            .iter()
            .zip(v.dq.values())
            .map(|(a, b)| a + h * b)
            .collect();
    let l = p.l.matrix() + v.dl.matrix() * Complex64::new(h, 0.0);
    Ok(StatePoint::new(
        RegularRealDiagonal::new(q, p.q.min_gap())?,
        HermitianMatrix::new(l)?,
    ))
}

fn field_norm(v: &TangentVector) -> f64 {
    let q = v.dq.values().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    q.max(max_entry_norm(v.dl.matrix()))
}

/// Central-difference directional derivative of vector_field(m, .) along v.
fn field_derivative(m: u32, p: &StatePoint, v: &TangentVector) -> Result<(Vec<f64>, CMat)> {
    let h = COMMUTATOR_FD_STEP / field_norm(v).max(1.0);
    let plus = vector_field(m, &shift_point(p, v, h)?)?;
    let minus = vector_field(m, &shift_point(p, v, -h)?)?;
    let dq: Vec<f64> = plus
        .dq
        .values()
        .iter()
        .zip(minus.dq.values())
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect();
    let dl =
        (plus.dl.into_matrix() - minus.dl.into_matrix()) * Complex64::new(1.0 / (2.0 * h), 0.0);
    Ok((dq, dl))
}

/// Residuals of the vector-field commutator identity: the q-part vanishes and
/// the L-part equals [T_{m,l}, L], with T the gauge compensator.
pub fn flow_commutator_check(m: u32, ell: u32, p: &StatePoint) -> Result<(f64, f64)> {
    let vm = vector_field(m, p)?;
    let vl = vector_field(ell, p)?;
    // (V_m o V_l - V_l o V_m) applied to the coordinates
    let (dq_lm, dl_lm) = field_derivative(ell, p, &vm)?;
    let (dq_ml, dl_ml) = field_derivative(m, p, &vl)?;
    let comm_q: Vec<f64> = dq_lm.iter().zip(&dq_ml).map(|(a, b)| a - b).collect();
    let comm_l = &dl_lm - &dl_ml;

    let t = gauge_compensator_t(&p.q, &p.l, m, ell)?;
    let expected = commutator(&t, p.l.matrix());
    let residual_q = comm_q.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let residual_l = max_entry_norm(&(comm_l - expected));
    Ok((residual_q, residual_l))
}

/// Max relative drift of H_k = tr(L^k) along the RK4 trajectory.
pub fn invariant_drift(m: u32, p0: &StatePoint, t: f64, steps: usize, k: u32) -> Result<f64> {
    if k < 1 {
        return Err(Error::Config("invariant index must be at least 1".into()));
    }
    let h_k =
        |p: &StatePoint| -> f64 { p.l.power(k).matrix().diagonal().iter().map(|z| z.re).sum() };
    let h0 = h_k(p0);
    let path = integrate_path(m, p0, t, steps, 1)?;
    Ok(path
        .iter()
        .map(|(_, p)| (h_k(p) - h0).abs() / (1.0 + h0.abs()))
        .fold(0.0, f64::max))
}
