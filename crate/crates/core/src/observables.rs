//! Gauge-invariant scalar functions of (q, L) as expression trees over the
//! coordinates q_j and trace words alternating diagonal projectors E_ii with
//! powers of L, closed under real-linear combination, product, and smooth
//! scalar composition. Gradients are exact, computed by threading
//! forward-mode dual scalars through the tree, one probe direction at a
//! time. Finite differences are kept only as an independent test oracle.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, zeros, CMat, HermitianMatrix, RealDiagonal, RegularRealDiagonal};
use crate::sampling;

/// Orthonormal basis of i u(n) under Re tr: E_jj, (E_jk + E_kj)/sqrt2,
/// i(E_jk - E_kj)/sqrt2 for j < k.
pub fn hermitian_basis(n: usize) -> Vec<CMat> {
    let mut basis = Vec::with_capacity(n * n);
    let s = 1.0 / 2f64.sqrt();
    for j in 0..n {
        let mut e = zeros(n);
        e[(j, j)] = Complex64::new(1.0, 0.0);
        basis.push(e);
    }
    for j in 0..n {
        for k in (j + 1)..n {
            let mut sym = zeros(n);
            sym[(j, k)] = Complex64::new(s, 0.0);
            sym[(k, j)] = Complex64::new(s, 0.0);
            basis.push(sym);
            let mut asym = zeros(n);
            asym[(j, k)] = Complex64::new(0.0, s);
            asym[(k, j)] = Complex64::new(0.0, -s);
            basis.push(asym);
        }
    }
    basis
}

#[derive(Debug, Clone, Copy)]
struct Dual {
    val: f64,
    der: f64,
}

impl Dual {
    fn new(val: f64, der: f64) -> Self {
        Self { val, der }
    }

    fn add(self, o: Self) -> Self {
        Self::new(self.val + o.val, self.der + o.der)
    }

    fn mul(self, o: Self) -> Self {
        Self::new(self.val * o.val, self.der * o.val + self.val * o.der)
    }

    fn scale(self, c: f64) -> Self {
        Self::new(c * self.val, c * self.der)
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        Self::new(e, self.der * e)
    }

    fn ln(self) -> Result<Self> {
        if self.val <= 0.0 {
            return Err(Error::ScalarDomain(format!(
                "log of nonpositive value {}",
                self.val
            )));
        }
        Ok(Self::new(self.val.ln(), self.der / self.val))
    }

    fn powi(self, k: i32) -> Result<Self> {
        if k == 0 {
            return Ok(Self::new(1.0, 0.0));
        }
        if k < 0 && self.val == 0.0 {
            return Err(Error::ScalarDomain("negative power of zero".into()));
        }
        Ok(Self::new(
            self.val.powi(k),
            k as f64 * self.val.powi(k - 1) * self.der,
        ))
    }
}

/// One factor of a trace word: a diagonal projector E_ii or a power of L.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordFactor {
    Proj(usize),
    LPow(u32),
}

/// A finite product of word factors, evaluated as Re tr(product).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word(pub Vec<WordFactor>);

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Const(f64),
    Coord(usize),
    WordTrace(Word),
    /// Re L_{jk}; escapes the gauge-invariance guard, test use only.
    EntryRe(usize, usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Scale(f64, Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    PowI(Box<Expr>, i32),
}

impl Expr {
    fn min_dim(&self) -> usize {
        match self {
            Expr::Const(_) => 1,
            Expr::Coord(j) => j + 1,
            Expr::WordTrace(w) => {
                w.0.iter()
                    .map(|f| match f {
                        WordFactor::Proj(i) => i + 1,
                        WordFactor::LPow(_) => 1,
                    })
                    .max()
                    .unwrap_or(1)
            }
            Expr::EntryRe(j, k) => (*j).max(*k) + 1,
            Expr::Add(a, b) | Expr::Mul(a, b) => a.min_dim().max(b.min_dim()),
            Expr::Scale(_, e) | Expr::Exp(e) | Expr::Ln(e) | Expr::PowI(e, _) => e.min_dim(),
        }
    }

    fn eval_dual(&self, q: &[f64], dq: &[f64], l: &CMat, dl: &CMat) -> Result<Dual> {
        match self {
            Expr::Const(c) => Ok(Dual::new(*c, 0.0)),
            Expr::Coord(j) => Ok(Dual::new(q[*j], dq[*j])),
            Expr::WordTrace(w) => Ok(eval_word(w, l, dl)),
            Expr::EntryRe(j, k) => Ok(Dual::new(l[(*j, *k)].re, dl[(*j, *k)].re)),
            Expr::Add(a, b) => Ok(a.eval_dual(q, dq, l, dl)?.add(b.eval_dual(q, dq, l, dl)?)),
            Expr::Mul(a, b) => Ok(a.eval_dual(q, dq, l, dl)?.mul(b.eval_dual(q, dq, l, dl)?)),
            Expr::Scale(c, e) => Ok(e.eval_dual(q, dq, l, dl)?.scale(*c)),
            Expr::Exp(e) => Ok(e.eval_dual(q, dq, l, dl)?.exp()),
            Expr::Ln(e) => e.eval_dual(q, dq, l, dl)?.ln(),
            Expr::PowI(e, k) => e.eval_dual(q, dq, l, dl)?.powi(*k),
        }
    }
}

fn eval_word(word: &Word, l: &CMat, dl: &CMat) -> Dual {
    let n = l.nrows();
    let mut val = CMat::identity(n, n);
    let mut der = zeros(n);
    for factor in &word.0 {
        match factor {
            WordFactor::Proj(i) => {
                let mut p = zeros(n);
                p[(*i, *i)] = Complex64::new(1.0, 0.0);
                der = &der * &p;
                val = &val * &p;
            }
            WordFactor::LPow(k) => {
                for _ in 0..*k {
                    // (val, der) * (l, dl)
                    der = &der * l + &val * dl;
                    val = &val * l;
                }
            }
        }
    }
    let tr_val: Complex64 = (0..n).map(|j| val[(j, j)]).sum();
    let tr_der: Complex64 = (0..n).map(|j| der[(j, j)]).sum();
    Dual::new(tr_val.re, tr_der.re)
}

/// Exact first derivatives of an observable at (q, L): grad1 in A, grad2 in
/// i u(n).
#[derive(Debug, Clone)]
pub struct GradientPair {
    pub grad1: RealDiagonal,
    pub grad2: HermitianMatrix,
}

/// A gauge-invariant scalar function of (q, L).
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    expr: Expr,
    name: String,
}

const GAUGE_CHECK_TRIALS: usize = 4;
const GAUGE_CHECK_SEED: u64 = 0xB1AA;

impl Observable {
    fn checked(expr: Expr, name: String) -> Result<Self> {
        let obs = Self { expr, name };
        match obs.gauge_deviation(GAUGE_CHECK_TRIALS, GAUGE_CHECK_SEED) {
            Some(dev) if dev > 1e-10 => Err(Error::GaugeViolation { deviation: dev }),
            _ => Ok(obs),
        }
    }

    fn unchecked(expr: Expr, name: String) -> Self {
        Self { expr, name }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Smallest matrix dimension on which this observable is defined.
    pub fn min_dim(&self) -> usize {
        self.expr.min_dim().max(2)
    }

    pub fn constant(c: f64) -> Self {
        Self::unchecked(Expr::Const(c), format!("{c}"))
    }

    /// The coordinate q_j (0-based index).
    pub fn coord(j: usize) -> Self {
        Self::unchecked(Expr::Coord(j), format!("q[{}]", j + 1))
    }

    pub fn word_trace(word: Word) -> Result<Self> {
        let name = format!(
            "wtr({})",
            word.0
                .iter()
                .map(|f| match f {
                    WordFactor::Proj(i) => format!("P{}", i + 1),
                    WordFactor::LPow(k) => format!("L^{k}"),
                })
                .collect::<Vec<_>>()
                .join(",")
        );
        Self::checked(Expr::WordTrace(word), name)
    }

    /// H_m = (1/m) tr(L^m).
    pub fn hamiltonian(m: u32) -> Self {
        assert!(m >= 1);
        Self::unchecked(
            Expr::Scale(
                1.0 / m as f64,
                Box::new(Expr::WordTrace(Word(vec![WordFactor::LPow(m)]))),
            ),
            format!("ham({m})"),
        )
    }

    /// Re L_{jk}: bypasses the gauge guard on purpose, so that the guard
    /// itself can be exercised in tests.
    pub fn entry_re_unchecked(j: usize, k: usize) -> Self {
        Self::unchecked(Expr::EntryRe(j, k), format!("entry({},{})", j + 1, k + 1))
    }

    pub fn add(self, other: Self) -> Self {
        let name = format!("add({},{})", self.name, other.name);
        Self::unchecked(Expr::Add(Box::new(self.expr), Box::new(other.expr)), name)
    }

    pub fn mul(self, other: Self) -> Self {
        let name = format!("mul({},{})", self.name, other.name);
        Self::unchecked(Expr::Mul(Box::new(self.expr), Box::new(other.expr)), name)
    }

    pub fn scale(self, c: f64) -> Self {
        let name = format!("scale({c},{})", self.name);
        Self::unchecked(Expr::Scale(c, Box::new(self.expr)), name)
    }

    pub fn exp(self) -> Self {
        let name = format!("exp({})", self.name);
        Self::unchecked(Expr::Exp(Box::new(self.expr)), name)
    }

    pub fn ln(self) -> Self {
        let name = format!("ln({})", self.name);
        Self::unchecked(Expr::Ln(Box::new(self.expr)), name)
    }

    pub fn powi(self, k: i32) -> Self {
        let name = format!("pow({},{k})", self.name);
        Self::unchecked(Expr::PowI(Box::new(self.expr), k), name)
    }

    pub fn evaluate(&self, q: &RegularRealDiagonal, l: &HermitianMatrix) -> Result<f64> {
        self.evaluate_raw(q.values(), l.matrix())
    }

    /// Evaluation on raw data; q is trusted to be regular here.
    pub fn evaluate_raw(&self, q: &[f64], l: &CMat) -> Result<f64> {
        let n = l.nrows();
        let dq = vec![0.0; q.len()];
        let dl = zeros(n);
        Ok(self.expr.eval_dual(q, &dq, l, &dl)?.val)
    }

    /// Directional derivative along (dq, dl) by one dual-number sweep.
    pub fn directional_derivative(
        &self,
        q: &[f64],
        dq: &[f64],
        l: &CMat,
        dl: &CMat,
    ) -> Result<f64> {
        Ok(self.expr.eval_dual(q, dq, l, dl)?.der)
    }

    pub fn gradients(&self, q: &RegularRealDiagonal, l: &HermitianMatrix) -> Result<GradientPair> {
        self.gradients_raw(q.values(), l.matrix())
    }

    pub fn gradients_raw(&self, q: &[f64], l: &CMat) -> Result<GradientPair> {
        let n = l.nrows();
        let dl0 = zeros(n);
        let mut grad1 = vec![0.0; q.len()];
        for j in 0..q.len() {
            let mut dq = vec![0.0; q.len()];
            dq[j] = 1.0;
            grad1[j] = self.expr.eval_dual(q, &dq, l, &dl0)?.der;
        }
        let dq0 = vec![0.0; q.len()];
        let mut grad2 = zeros(n);
        for z in hermitian_basis(n) {
            let d = self.expr.eval_dual(q, &dq0, l, &z)?.der;
            grad2 += z * Complex64::new(d, 0.0);
        }
        // Only the Hermitian part is ever paired against variations in i u(n).
        let grad2 = hermitize(&grad2);
        Ok(GradientPair {
            grad1: RealDiagonal::new(grad1),
            grad2: HermitianMatrix::new(grad2)?,
        })
    }

    /// D[F] = <1_n, grad2 F>: the derivation with D[q] = 0 and D[L] = 1_n.
    pub fn apply_derivation_d(&self, q: &RegularRealDiagonal, l: &HermitianMatrix) -> Result<f64> {
        self.apply_derivation_d_raw(q.values(), l.matrix())
    }

    pub fn apply_derivation_d_raw(&self, q: &[f64], l: &CMat) -> Result<f64> {
        // One dual sweep along dL = 1_n; no basis assembly needed.
        let n = l.nrows();
        let dq = vec![0.0; q.len()];
        let dl = CMat::identity(n, n);
        Ok(self.expr.eval_dual(q, &dq, l, &dl)?.der)
    }

    /// Largest relative deviation |F(q,L) - F(q, eta L eta^-1)| over random
    /// trials, or None when no trial was evaluable.
    fn gauge_deviation(&self, trials: usize, seed: u64) -> Option<f64> {
        let n = self.min_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: Option<f64> = None;
        for _ in 0..trials {
            let q = sampling::random_alcove_point(n, &mut rng);
            let l = sampling::random_hermitian(n, &mut rng);
            let eta = sampling::random_phase(n, &mut rng).matrix();
            let conj = &eta * l.matrix() * eta.adjoint();
            let (a, b) = match (
                self.evaluate_raw(q.values(), l.matrix()),
                self.evaluate_raw(q.values(), &conj),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue,
            };
            let dev = (a - b).abs() / (1.0 + a.abs());
            worst = Some(worst.map_or(dev, |w: f64| w.max(dev)));
        }
        worst
    }

    /// Samples random (q, L, eta) and verifies gauge invariance.
    pub fn check_gauge_invariance(&self, trials: usize) -> bool {
        match self.gauge_deviation(trials, GAUGE_CHECK_SEED ^ 0x5eed) {
            Some(dev) => dev <= 1e-10,
            None => true,
        }
    }
}

impl std::fmt::Display for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// The canonical family used by the verification suites: coordinates, the
/// Hamiltonians H_m (m <= 4), projected trace words with a + b <= 4, and a
/// smooth mixed composition exp(q_1 - q_2) H_2.
pub fn canonical_family(n: usize) -> Vec<Observable> {
    let mut family = Vec::new();
    for j in 0..n {
        family.push(Observable::coord(j));
    }
    for m in 1..=4 {
        family.push(Observable::hamiltonian(m));
    }
    for i in 0..n.min(2) {
        for j in 0..n.min(2) {
            for a in 1..=3u32 {
                for b in 1..=(4 - a) {
                    let word = Word(vec![
                        WordFactor::Proj(i),
                        WordFactor::LPow(a),
                        WordFactor::Proj(j),
                        WordFactor::LPow(b),
                    ]);
                    family
                        .push(Observable::word_trace(word).expect("projected words are invariant"));
                }
            }
        }
    }
    let mixed = Observable::coord(0)
        .add(Observable::coord(1).scale(-1.0))
        .exp()
        .mul(Observable::hamiltonian(2));
    family.push(mixed);
    family
}

/// Random DSL tree for the gradient-oracle suites.
pub fn random_observable<R: Rng>(n: usize, rng: &mut R) -> Observable {
    random_tree(n, 3, rng)
}

fn random_tree<R: Rng>(n: usize, depth: u32, rng: &mut R) -> Observable {
    if depth == 0 {
        return random_leaf(n, rng);
    }
    match rng.gen_range(0..6) {
        0 => random_leaf(n, rng),
        1 => random_tree(n, depth - 1, rng).add(random_tree(n, depth - 1, rng)),
        2 => random_tree(n, depth - 1, rng).mul(random_tree(n, depth - 1, rng)),
        3 => random_tree(n, depth - 1, rng).scale(rng.gen_range(-2.0..2.0)),
        // exp of a bounded combination keeps values well-scaled
        4 => random_leaf(n, rng).scale(rng.gen_range(-0.5..0.5)).exp(),
        _ => random_leaf(n, rng).powi(rng.gen_range(1..=3)),
    }
}

fn random_leaf<R: Rng>(n: usize, rng: &mut R) -> Observable {
    match rng.gen_range(0..4) {
        0 => Observable::coord(rng.gen_range(0..n)),
        1 => Observable::hamiltonian(rng.gen_range(1..=4)),
        2 => Observable::constant(rng.gen_range(-1.0..1.0)),
        _ => {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            let a = rng.gen_range(1..=2u32);
            let b = rng.gen_range(1..=2u32);
            Observable::word_trace(Word(vec![
                WordFactor::Proj(i),
                WordFactor::LPow(a),
                WordFactor::Proj(j),
                WordFactor::LPow(b),
            ]))
            .expect("projected words are invariant")
        }
    }
}

// ---------------------------------------------------------------------------
// Textual serialization (prefix notation), e.g. mul(q[1], wtr(P1,L^2,P2,L^1)).
// ---------------------------------------------------------------------------

pub fn parse_observable(input: &str) -> Result<Observable> {
    let mut parser = Parser { src: input, pos: 0 };
    let obs = parser.parse_expr()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(Error::Parse(format!(
            "trailing input at byte {}: {:?}",
            parser.pos,
            &parser.src[parser.pos..]
        )));
    }
    Ok(obs)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> Result<()> {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected {token:?} at byte {} in {:?}",
                self.pos, self.src
            )))
        }
    }

    fn peek_ident(&mut self) -> &'a str {
        self.skip_ws();
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !c.is_alphanumeric() && *c != '_')
            .map_or(rest.len(), |(i, _)| i);
        &rest[..end]
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !matches!(c, '0'..='9' | '.' | '-' | '+' | 'e' | 'E'))
            .map_or(rest.len(), |(i, _)| i);
        let text = &rest[..end];
        let value: f64 = text
            .parse()
            .map_err(|_| Error::Parse(format!("bad number {text:?} at byte {}", self.pos)))?;
        self.pos += end;
        Ok(value)
    }

    fn index(&mut self) -> Result<usize> {
        let v = self.number()?;
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::Parse(format!("expected 1-based index, got {v}")));
        }
        Ok(v as usize - 1)
    }

    fn parse_expr(&mut self) -> Result<Observable> {
        let head = self.peek_ident();
        match head {
            "q" => {
                self.eat("q")?;
                self.eat("[")?;
                let j = self.index()?;
                self.eat("]")?;
                Ok(Observable::coord(j))
            }
            "wtr" => {
                self.eat("wtr")?;
                self.eat("(")?;
                let mut factors = Vec::new();
                loop {
                    self.skip_ws();
                    if self.rest().starts_with('P') {
                        self.eat("P")?;
                        factors.push(WordFactor::Proj(self.index()?));
                    } else if self.rest().starts_with('L') {
                        self.eat("L")?;
                        let k = if self.rest().starts_with('^') {
                            self.eat("^")?;
                            let v = self.number()?;
                            if v < 1.0 || v.fract() != 0.0 {
                                return Err(Error::Parse(format!("bad L power {v}")));
                            }
                            v as u32
                        } else {
                            1
                        };
                        factors.push(WordFactor::LPow(k));
                    } else {
                        return Err(Error::Parse(format!(
                            "expected word factor at byte {}",
                            self.pos
                        )));
                    }
                    self.skip_ws();
                    if self.rest().starts_with(',') {
                        self.eat(",")?;
                    } else {
                        break;
                    }
                }
                self.eat(")")?;
                Observable::word_trace(Word(factors))
            }
            "ham" => {
                self.eat("ham")?;
                self.eat("(")?;
                let m = self.index()? + 1;
                self.eat(")")?;
                Ok(Observable::hamiltonian(m as u32))
            }
            "add" | "mul" => {
                let op = head.to_string();
                self.eat(&op)?;
                self.eat("(")?;
                let mut acc = self.parse_expr()?;
                while {
                    self.skip_ws();
                    self.rest().starts_with(',')
                } {
                    self.eat(",")?;
                    let next = self.parse_expr()?;
                    acc = if op == "add" {
                        acc.add(next)
                    } else {
                        acc.mul(next)
                    };
                }
                self.eat(")")?;
                Ok(acc)
            }
            "scale" => {
                self.eat("scale")?;
                self.eat("(")?;
                let c = self.number()?;
                self.eat(",")?;
                let e = self.parse_expr()?;
                self.eat(")")?;
                Ok(e.scale(c))
            }
            "exp" => {
                self.eat("exp")?;
                self.eat("(")?;
                let e = self.parse_expr()?;
                self.eat(")")?;
                Ok(e.exp())
            }
            "ln" => {
                self.eat("ln")?;
                self.eat("(")?;
                let e = self.parse_expr()?;
                self.eat(")")?;
                Ok(e.ln())
            }
            "pow" => {
                self.eat("pow")?;
                self.eat("(")?;
                let e = self.parse_expr()?;
                self.eat(",")?;
                let k = self.number()?;
                self.eat(")")?;
                Ok(e.powi(k as i32))
            }
            _ => {
                let c = self.number()?;
                Ok(Observable::constant(c))
            }
        }
    }
}
