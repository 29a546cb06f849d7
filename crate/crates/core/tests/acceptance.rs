//! Acceptance battery: one test per criterion, each printing a single
//! PASS/FAIL line with the measured residual and its pinned tolerance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bihamlab::brackets::{
    bracket1, bracket1_grads, bracket2, bracket_derived, bracket_extended, bracket_pair,
    exactness_residual, jacobi_residual, jacobi_residual_extended, pair_triple_correspondence,
    BracketKind, ExtObservable, ExtendedStatePoint, Grad2, StateFunction, StatePoint,
    TripleObservable, TripleStatePoint,
};
use bihamlab::hierarchy::{exact_flow, flow_commutator_check, integrate, vector_field};
use bihamlab::linalg::{commutator, max_entry_norm, pairing, zeros, CMat, ComplexDiagonal};
use bihamlab::observables::{canonical_family, hermitian_basis, random_observable, Observable};
use bihamlab::rmatrix::{cdybe_residual, gauge_compensator_routes};
use bihamlab::sampling;

const SEED: u64 = 0xACCE;

fn rng_for(offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SEED.wrapping_add(offset))
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StatePoint {
    StatePoint::new(
        sampling::random_alcove_point(n, rng),
        sampling::random_hermitian(n, rng),
    )
}

fn report(idx: u32, name: &str, residual: f64, tol: f64) {
    let verdict = if residual <= tol { "PASS" } else { "FAIL" };
    println!("[{idx:>2}] {name}: {verdict} (max residual {residual:.3e}, tolerance {tol:.1e})");
    assert!(
        residual <= tol,
        "criterion {idx} ({name}): {residual:.3e} > {tol:.1e}"
    );
}

#[test]
fn criterion_01_hamiltonian_forms() {
    let tol = 1e-9;
    let mut worst = 0.0f64;
    for (trial, n) in (0..50).zip([2usize, 3].iter().cycle()) {
        let mut rng = rng_for(100 + trial);
        let p = random_state(*n, &mut rng);
        let family = canonical_family(*n);
        for m in 1..=3u32 {
            let v = vector_field(m, &p).unwrap();
            let hm = Observable::hamiltonian(m);
            let hm1 = Observable::hamiltonian(m + 1);
            for f in &family {
                let vf = f
                    .directional_derivative(
                        p.q.values(),
                        v.dq.values(),
                        p.l.matrix(),
                        v.dl.matrix(),
                    )
                    .unwrap();
                let b2 = bracket2(f, &hm, &p).unwrap();
                let b1 = bracket1(f, &hm1, &p).unwrap();
                worst = worst.max((vf - b2).abs()).max((vf - b1).abs());
            }
        }
    }
    report(1, "hierarchy fields are bi-Hamiltonian", worst, tol);
}

#[test]
fn criterion_02_involution() {
    let tol = 1e-11;
    let mut worst = 0.0f64;
    for (trial, n) in (0..60).zip([2usize, 3, 5].iter().cycle()) {
        let mut rng = rng_for(200 + trial);
        let p = random_state(*n, &mut rng);
        for ell in 1..=4u32 {
            for m in 1..=4u32 {
                let f = Observable::hamiltonian(ell);
                let h = Observable::hamiltonian(m);
                worst = worst
                    .max(bracket1(&f, &h, &p).unwrap().abs())
                    .max(bracket2(&f, &h, &p).unwrap().abs());
            }
        }
    }
    report(2, "spectral Hamiltonians in involution", worst, tol);
}

#[test]
fn criterion_03_compatibility() {
    let tol = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = rng_for(300 + trial);
        let p = random_state(3, &mut rng);
        let family = canonical_family(3);
        for _ in 0..5 {
            let f = &family[rng.gen_range(0..family.len())];
            let h = &family[rng.gen_range(0..family.len())];
            let lhs = bracket1(f, h, &p).unwrap();
            let rhs = bracket_derived(f, h, &p).unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    report(3, "first bracket is the derived bracket", worst, tol);
}

#[test]
fn criterion_04_exactness() {
    let tol = 1e-6;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = rng_for(400 + trial);
        let p = random_state(3, &mut rng);
        let family = canonical_family(3);
        for _ in 0..5 {
            let f = &family[rng.gen_range(0..family.len())];
            let h = &family[rng.gen_range(0..family.len())];
            worst = worst.max(exactness_residual(f, h, &p).unwrap());
        }
    }
    report(4, "derivation is exact for the first bracket", worst, tol);
}

#[test]
fn criterion_05_pencil_jacobi() {
    let tol = 1e-5;
    let mut worst = 0.0f64;
    // finite-difference heavy: n = 2 keeps the noise floor small
    for trial in 0..5u64 {
        let mut rng = rng_for(500 + trial);
        let p = random_state(2, &mut rng);
        let family = canonical_family(2);
        let x = rng.gen_range(-1.5..1.5);
        let y = rng.gen_range(-1.5..1.5);
        let f = &family[rng.gen_range(0..family.len())];
        let g = &family[rng.gen_range(0..family.len())];
        let h = &family[rng.gen_range(0..family.len())];
        worst = worst.max(jacobi_residual(BracketKind::Pencil { x, y }, f, g, h, &p).unwrap());
    }
    report(5, "bracket pencils satisfy Jacobi", worst, tol);
}

#[test]
fn criterion_06_jacobi_identities() {
    let tol = 1e-5;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = rng_for(600 + trial);
        let n = 3;
        let p = random_state(n, &mut rng);
        let family = canonical_family(n);
        let f = &family[rng.gen_range(0..family.len())];
        let g = &family[rng.gen_range(0..family.len())];
        let h = &family[rng.gen_range(0..family.len())];
        worst = worst.max(jacobi_residual(BracketKind::B1, f, g, h, &p).unwrap());
        worst = worst.max(jacobi_residual(BracketKind::B2, f, g, h, &p).unwrap());

        let xi = sampling::random_t_diagonal(n, &mut rng);
        let tp = TripleStatePoint::new(p.q.clone(), p.l.clone(), xi).unwrap();
        let basis = hermitian_basis(n);
        let pick = |rng: &mut ChaCha8Rng| -> TripleObservable {
            match rng.gen_range(0..3) {
                0 => TripleObservable::CoordL(basis[rng.gen_range(0..basis.len())].clone()),
                1 => TripleObservable::CoordQ((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                _ => TripleObservable::CoordXi(sampling::random_t_diagonal(n, rng)),
            }
        };
        let (tf, tg, th) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        worst = worst.max(jacobi_residual_extended(&tf, &tg, &th, &tp).unwrap());
    }
    report(
        6,
        "Jacobi identity for both brackets and the pre-reduction bracket",
        worst,
        tol,
    );
}

struct LinearFn {
    dq: Vec<f64>,
    dl: CMat,
}

impl StateFunction for LinearFn {
    fn eval(&self, q: &[f64], l: &CMat) -> bihamlab::Result<f64> {
        let a: f64 = self.dq.iter().zip(q).map(|(x, y)| x * y).sum();
        Ok(a + pairing(&self.dl, l)?)
    }

    fn grads(&self, _q: &[f64], _l: &CMat) -> bihamlab::Result<Grad2> {
        Ok(Grad2 {
            dq: self.dq.clone(),
            dl: self.dl.clone(),
        })
    }
}

#[test]
fn criterion_07_extended_bracket_reduction() {
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for (trial, n) in (0..6u64).zip([2usize, 3].iter().cycle()) {
        let mut rng = rng_for(700 + trial);
        let p = random_state(*n, &mut rng);
        let p0 = TripleStatePoint::new(p.q.clone(), p.l.clone(), zeros(*n)).unwrap();
        let mut coords: Vec<(TripleObservable, LinearFn)> = Vec::new();
        for z in hermitian_basis(*n) {
            coords.push((
                TripleObservable::CoordL(z.clone()),
                LinearFn {
                    dq: vec![0.0; *n],
                    dl: z,
                },
            ));
        }
        for j in 0..*n {
            let mut dq = vec![0.0; *n];
            dq[j] = 1.0;
            coords.push((
                TripleObservable::CoordQ(dq.clone()),
                LinearFn { dq, dl: zeros(*n) },
            ));
        }
        for (tf, lf) in &coords {
            for (th, lh) in &coords {
                let ext = bracket_extended(tf, th, &p0).unwrap();
                let red = bracket1_grads(
                    &p.q,
                    p.l.matrix(),
                    &lf.grads(p.q.values(), p.l.matrix()).unwrap(),
                    &lh.grads(p.q.values(), p.l.matrix()).unwrap(),
                )
                .unwrap();
                worst = worst.max((ext - red).abs());
            }
        }
    }
    report(
        7,
        "pre-reduction bracket restricts to the first bracket",
        worst,
        tol,
    );
}

#[test]
fn criterion_08_pair_bracket_restriction_and_action() {
    let restriction_tol = 1e-11;
    let action_tol = 1e-10;
    let mut worst_restriction = 0.0f64;
    let mut worst_action = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = rng_for(800 + trial);
        let n = 3;
        let p = random_state(n, &mut rng);
        let ext = ExtendedStatePoint {
            w: ComplexDiagonal::from_regular(&p.q),
            l: p.l.clone(),
        };
        let family = canonical_family(n);
        for _ in 0..4 {
            let f = &family[rng.gen_range(0..family.len())];
            let h = &family[rng.gen_range(0..family.len())];
            let pv = bracket_pair(
                &ExtObservable::Invariant(f.clone()),
                &ExtObservable::Invariant(h.clone()),
                &ext,
            )
            .unwrap();
            let b2 = bracket2(f, h, &p).unwrap();
            worst_restriction = worst_restriction.max((pv - b2).abs());

            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(0.0, rng.gen_range(-1.0..1.0)))
                .collect();
            let wx = ExtObservable::coord_w(x.clone()).unwrap();
            let got = bracket_pair(&ExtObservable::Invariant(h.clone()), &wx, &ext).unwrap();
            let gh = h.gradients(&p.q, &p.l).unwrap();
            let xm = CMat::from_fn(
                n,
                n,
                |j, k| if j == k { x[j] } else { Complex64::default() },
            );
            let action = commutator(&xm, p.l.matrix()) * Complex64::new(-0.5, 0.0);
            let expected = pairing(gh.grad2.matrix(), &action).unwrap();
            worst_action = worst_action.max((got - expected).abs());
        }
    }
    report(
        8,
        "pair-space bracket restriction",
        worst_restriction,
        restriction_tol,
    );
    report(8, "pair-space torus action", worst_action, action_tol);
}

#[test]
fn criterion_09_flow_commutator_and_compensator() {
    let flow_tol = 1e-6;
    let route_tol = 1e-10;
    let mut worst_flow = 0.0f64;
    let mut worst_route = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = rng_for(900 + trial);
        let p = random_state(3, &mut rng);
        for (m, ell) in [(1, 2), (1, 3), (2, 3)] {
            let (rq, rl) = flow_commutator_check(m, ell, &p).unwrap();
            worst_flow = worst_flow.max(rq).max(rl);
            let (direct, closed) = gauge_compensator_routes(&p.q, &p.l, m, ell).unwrap();
            worst_route = worst_route.max(max_entry_norm(&(direct - closed)));
        }
    }
    report(
        9,
        "flow commutator matches the gauge compensator",
        worst_flow,
        flow_tol,
    );
    report(
        9,
        "compensator dual-route agreement",
        worst_route,
        route_tol,
    );
}

#[test]
fn criterion_10_yang_baxter_identity() {
    let tol = 1e-9;
    let mut worst = 0.0f64;
    for (trial, n) in (0..100u64).zip([2usize, 3, 5].iter().cycle()) {
        let mut rng = rng_for(1000 + trial);
        let q = sampling::random_alcove_point(*n, &mut rng);
        let x = sampling::random_hermitian(*n, &mut rng);
        let y = sampling::random_hermitian(*n, &mut rng);
        worst = worst.max(cdybe_residual(&q, x.matrix(), y.matrix()).unwrap());
    }
    report(10, "modified dynamical Yang-Baxter identity", worst, tol);
}

#[test]
fn criterion_11_projection_oracle() {
    let match_tol = 1e-8;
    let spectrum_tol = 1e-10;
    let t = 0.2;
    let mut worst_match = 0.0f64;
    let mut worst_spectrum = 0.0f64;
    let mut ratios: Vec<f64> = Vec::new();
    for trial in 0..10u64 {
        let mut rng = rng_for(1100 + trial);
        let p = random_state(3, &mut rng);
        let exact = exact_flow(1, &p, t).unwrap();
        let rk = integrate(1, &p, t, 2000).unwrap();
        for f in canonical_family(3) {
            if let (Ok(a), Ok(b)) = (
                f.evaluate_raw(exact.q.values(), exact.l.matrix()),
                f.evaluate_raw(rk.q.values(), rk.l.matrix()),
            ) {
                worst_match = worst_match.max((a - b).abs());
            }
        }
        for (a, b) in
            p.l.eigenvalues_desc()
                .iter()
                .zip(exact.l.eigenvalues_desc())
        {
            worst_spectrum = worst_spectrum.max((a - b).abs());
        }
        // convergence ratio at coarse steps where the fourth-order error
        // dominates the decomposition noise floor
        let err = |steps: usize| -> f64 {
            let rk = integrate(1, &p, t, steps).unwrap();
            canonical_family(3)
                .iter()
                .filter_map(|f| {
                    let a = f.evaluate_raw(exact.q.values(), exact.l.matrix()).ok()?;
                    let b = f.evaluate_raw(rk.q.values(), rk.l.matrix()).ok()?;
                    Some((a - b).abs())
                })
                .fold(0.0, f64::max)
        };
        ratios.push(err(50) / err(100).max(1e-300));
    }
    report(
        11,
        "RK4 matches the projection-method flow on invariants",
        worst_match,
        match_tol,
    );
    report(
        11,
        "projection-method flow conserves the spectrum",
        worst_spectrum,
        spectrum_tol,
    );
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let in_range = min_ratio >= 12.0 && max_ratio <= 20.0;
    println!(
        "[11] step-halving convergence ratio: {} (range [{min_ratio:.2}, {max_ratio:.2}], expected within [12, 20])",
        if in_range { "PASS" } else { "FAIL" }
    );
    assert!(
        in_range,
        "ratio range [{min_ratio:.2}, {max_ratio:.2}] outside [12, 20]"
    );
}

#[test]
fn criterion_12_triple_bracket_correspondence() {
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let mut rng = rng_for(1200 + trial);
        let n = 3;
        let q = sampling::random_alcove_point(n, &mut rng);
        let w_vals: Vec<Complex64> = q
            .values()
            .iter()
            .map(|&v| Complex64::new(v, rng.gen_range(-0.3..0.3)))
            .collect();
        let ext = ExtendedStatePoint {
            w: ComplexDiagonal::new(w_vals, q.min_gap()).unwrap(),
            l: sampling::random_hermitian(n, &mut rng),
        };
        let family = canonical_family(n);
        for _ in 0..3 {
            let f = ExtObservable::Invariant(family[rng.gen_range(0..family.len())].clone());
            let h = ExtObservable::Invariant(family[rng.gen_range(0..family.len())].clone());
            worst = worst.max(pair_triple_correspondence(&f, &h, &ext).unwrap());
        }
        let x: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(0.0, rng.gen_range(-1.0..1.0)))
            .collect();
        let wx = ExtObservable::coord_w(x).unwrap();
        let h = ExtObservable::Invariant(family[rng.gen_range(0..family.len())].clone());
        worst = worst.max(pair_triple_correspondence(&wx, &h, &ext).unwrap());
    }
    report(12, "triple-space bracket correspondence", worst, tol);
}

#[test]
fn criterion_13_gradient_engine() {
    let tol = 1e-7;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut trial = 0u64;
    while checked < 100 {
        let mut rng = rng_for(1300 + trial);
        trial += 1;
        let n = *[2usize, 3].iter().cycle().nth(trial as usize).unwrap();
        let p = random_state(n, &mut rng);
        let f = random_observable(n, &mut rng);
        if f.evaluate_raw(p.q.values(), p.l.matrix()).is_err() {
            continue;
        }
        let g = match f.gradients_raw(p.q.values(), p.l.matrix()) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let h = 1e-3;
        let central4 = |g: &dyn Fn(f64) -> f64| -> f64 {
            (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h)
        };
        let mut num = 0.0f64;
        let mut scale = 1.0f64;
        let mut ok = true;
        for j in 0..n {
            let eval = |t: f64| -> f64 {
                let mut q = p.q.values().to_vec();
                q[j] += t;
                f.evaluate_raw(&q, p.l.matrix()).unwrap_or(f64::NAN)
            };
            let fd = central4(&eval);
            if !fd.is_finite() {
                ok = false;
                break;
            }
            num = num.max((fd - g.grad1.values()[j]).abs());
            scale = scale.max(g.grad1.values()[j].abs());
        }
        if ok {
            for z in hermitian_basis(n) {
                let eval = |t: f64| -> f64 {
                    let lt = p.l.matrix() + &z * Complex64::new(t, 0.0);
                    f.evaluate_raw(p.q.values(), &lt).unwrap_or(f64::NAN)
                };
                let fd = central4(&eval);
                if !fd.is_finite() {
                    ok = false;
                    break;
                }
                let analytic = pairing(g.grad2.matrix(), &z).unwrap();
                num = num.max((fd - analytic).abs());
                scale = scale.max(analytic.abs());
            }
        }
        if !ok {
            continue;
        }
        worst = worst.max(num / scale);
        checked += 1;
    }
    report(
        13,
        "analytic gradients match finite differences",
        worst,
        tol,
    );
}
