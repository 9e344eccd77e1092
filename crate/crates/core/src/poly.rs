//! Exact multivariate polynomials and polynomial matrices.
//!
//! Kernels live in the variables `x, y, θ, ν`. Two scratch variables `η, μ`
//! are used while composing operators and never survive a composition.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rat = BigRational;

/// Build a rational from a numerator and a denominator.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // huge numerator/denominator: scale down through the bit length
            let shift = r.numer().bits().max(r.denom().bits()) as i64 - 900;
            let shift = shift.max(0) as usize;
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
            n / d
        }
    }
}

/// Exact conversion of a finite double to a rational.
pub fn f64_to_rat(v: f64) -> Rat {
    Rat::from_float(v).unwrap_or_else(<Rat as Zero>::zero)
}

/// Parse "3", "-1/2" or a decimal such as "15.25" / "1e-3" into an exact rational.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rat::new(n, d));
    }
    if let Ok(n) = s.parse::<BigInt>() {
        return Some(Rat::from_integer(n));
    }
    // decimal with optional exponent, read exactly
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let neg = mant.starts_with('-');
    let mant = mant.trim_start_matches(['-', '+']);
    let (ip, fp) = mant.split_once('.').unwrap_or((mant, ""));
    if ip.is_empty() && fp.is_empty() {
        return None;
    }
    if !ip.chars().chain(fp.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{ip}{fp}0").parse().ok()?;
    let digits = digits / BigInt::from(10);
    let scale = exp - fp.len() as i32;
    let ten = BigInt::from(10);
    let mut r = Rat::from_integer(digits);
    if scale >= 0 {
        r *= Rat::from_integer(num::pow(ten, scale as usize));
    } else {
        r /= Rat::from_integer(num::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

/// Coefficient field. Symbolic work uses [`Rat`]; SDP assembly uses `f64`.
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn from_rat(r: &Rat) -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Scalar for Rat {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }
    fn from_i64(v: i64) -> Self {
        Rat::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        rat_to_f64(self)
    }
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn from_rat(r: &Rat) -> Self {
        rat_to_f64(r)
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Polynomial variables. `Eta` and `Mu` are internal dummies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X = 0,
    Y = 1,
    Th = 2,
    Nu = 3,
    Eta = 4,
    Mu = 5,
}

pub const NVARS: usize = 6;
pub const ALL_VARS: [Var; NVARS] = [Var::X, Var::Y, Var::Th, Var::Nu, Var::Eta, Var::Mu];

impl Var {
    pub fn idx(self) -> usize {
        self as usize
    }
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Th => "θ",
            Var::Nu => "ν",
            Var::Eta => "η",
            Var::Mu => "μ",
        }
    }
}

/// Set of variables as a bit mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct VarSet(pub u8);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn of(vars: &[Var]) -> VarSet {
        VarSet(vars.iter().fold(0u8, |m, v| m | (1 << v.idx())))
    }
    pub fn contains(self, v: Var) -> bool {
        self.0 & (1 << v.idx()) != 0
    }
    pub fn with(self, v: Var) -> VarSet {
        VarSet(self.0 | (1 << v.idx()))
    }
    pub fn union(self, o: VarSet) -> VarSet {
        VarSet(self.0 | o.0)
    }
    pub fn is_subset(self, o: VarSet) -> bool {
        self.0 & !o.0 == 0
    }
    pub fn vars(self) -> Vec<Var> {
        ALL_VARS.iter().copied().filter(|v| self.contains(*v)).collect()
    }
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.vars().iter().map(|v| v.name()).collect();
        write!(f, "({})", names.join(","))
    }
}

/// Exponent vector, ordered graded-lexicographically with `x > y > θ > ν > η > μ`:
/// lower total degree first, then the monomial with the larger `x` exponent, and so on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Mono(pub [u8; NVARS]);

impl Mono {
    pub const ONE: Mono = Mono([0; NVARS]);

    pub fn var(v: Var, e: u8) -> Mono {
        let mut m = Mono::ONE;
        m.0[v.idx()] = e;
        m
    }
    pub fn from4(e: [u8; 4]) -> Mono {
        Mono([e[0], e[1], e[2], e[3], 0, 0])
    }
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }
    pub fn exp(&self, v: Var) -> u8 {
        self.0[v.idx()]
    }
    pub fn mul(&self, o: &Mono) -> Mono {
        let mut r = [0u8; NVARS];
        for i in 0..NVARS {
            r[i] = self.0[i] + o.0[i];
        }
        Mono(r)
    }
    pub fn support(&self) -> VarSet {
        let mut s = VarSet::EMPTY;
        for v in ALL_VARS {
            if self.0[v.idx()] > 0 {
                s = s.with(v);
            }
        }
        s
    }
}

impl Ord for Mono {
    fn cmp(&self, o: &Self) -> Ordering {
        self.degree()
            .cmp(&o.degree())
            .then_with(|| o.0.cmp(&self.0))
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// All monomials of total degree `<= d` in `vars`, in graded-lex order.
pub fn monomial_basis(d: u32, vars: VarSet) -> Vec<Mono> {
    let vs = vars.vars();
    let mut out = Vec::new();
    fn rec(vs: &[Var], left: u32, cur: &mut Mono, out: &mut Vec<Mono>) {
        match vs.split_first() {
            None => out.push(*cur),
            Some((v, rest)) => {
                for e in 0..=left {
                    cur.0[v.idx()] = e as u8;
                    rec(rest, left - e, cur, out);
                }
                cur.0[v.idx()] = 0;
            }
        }
    }
    let mut cur = Mono::ONE;
    rec(&vs, d, &mut cur, &mut out);
    out.sort();
    out
}

/// Integration limit: a constant or another variable.
#[derive(Clone, Debug, PartialEq)]
pub enum Bound {
    Const(Rat),
    Var(Var),
}

/// Axis-aligned rectangle `[a,b] x [c,d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    pub a: Rat,
    pub b: Rat,
    pub c: Rat,
    pub d: Rat,
}

impl Rect {
    pub fn new(a: Rat, b: Rat, c: Rat, d: Rat) -> Result<Rect> {
        if a >= b || c >= d {
            return Err(Error::Domain(format!(
                "need a < b and c < d, got x in [{a},{b}], y in [{c},{d}]"
            )));
        }
        Ok(Rect { a, b, c, d })
    }
    pub fn unit() -> Rect {
        Rect::new(rat(0, 1), rat(1, 1), rat(0, 1), rat(1, 1)).unwrap()
    }
    pub fn area(&self) -> Rat {
        (&self.b - &self.a) * (&self.d - &self.c)
    }
    pub fn af(&self) -> f64 {
        rat_to_f64(&self.a)
    }
    pub fn bf(&self) -> f64 {
        rat_to_f64(&self.b)
    }
    pub fn cf(&self) -> f64 {
        rat_to_f64(&self.c)
    }
    pub fn df(&self) -> f64 {
        rat_to_f64(&self.d)
    }
}

/// Sparse polynomial with coefficients in `F`, no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<F: Scalar = Rat> {
    pub terms: BTreeMap<Mono, F>,
}

impl<F: Scalar> Default for Poly<F> {
    fn default() -> Self {
        Poly::zero()
    }
}

impl<F: Scalar> Poly<F> {
    pub fn zero() -> Self {
        Poly { terms: BTreeMap::new() }
    }
    pub fn constant(c: F) -> Self {
        Poly::monomial(Mono::ONE, c)
    }
    pub fn one() -> Self {
        Poly::constant(F::one())
    }
    pub fn monomial(m: Mono, c: F) -> Self {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }
    pub fn var(v: Var) -> Self {
        Poly::monomial(Mono::var(v, 1), F::one())
    }
    /// `v - c`
    pub fn var_minus(v: Var, c: &Rat) -> Self {
        Poly::var(v).sub(&Poly::constant(F::from_rat(c)))
    }
    /// `c - v`
    pub fn const_minus(c: &Rat, v: Var) -> Self {
        Poly::constant(F::from_rat(c)).sub(&Poly::var(v))
    }
    /// `u - v`
    pub fn diff_of(u: Var, v: Var) -> Self {
        Poly::var(u).sub(&Poly::var(v))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn coeff(&self, m: &Mono) -> F {
        self.terms.get(m).cloned().unwrap_or_else(F::zero)
    }
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }
    pub fn degree_in(&self, v: Var) -> u32 {
        self.terms.keys().map(|m| m.exp(v) as u32).max().unwrap_or(0)
    }
    pub fn vars(&self) -> VarSet {
        self.terms.keys().fold(VarSet::EMPTY, |s, m| s.union(m.support()))
    }
    /// Constant term if the polynomial is constant.
    pub fn as_const(&self) -> Option<F> {
        match self.terms.len() {
            0 => Some(F::zero()),
            1 => self.terms.get(&Mono::ONE).cloned(),
            _ => None,
        }
    }

    pub fn add_term(&mut self, m: Mono, c: F) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(v) => {
                let nv = v.clone() + c;
                if nv.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *v = nv;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn add_assign(&mut self, o: &Poly<F>) {
        for (m, c) in &o.terms {
            self.add_term(*m, c.clone());
        }
    }
    pub fn add(&self, o: &Poly<F>) -> Poly<F> {
        let mut r = self.clone();
        r.add_assign(o);
        r
    }
    pub fn sub(&self, o: &Poly<F>) -> Poly<F> {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            r.add_term(*m, -c.clone());
        }
        r
    }
    pub fn neg(&self) -> Poly<F> {
        Poly { terms: self.terms.iter().map(|(m, c)| (*m, -c.clone())).collect() }
    }
    pub fn scale(&self, s: &F) -> Poly<F> {
        if s.is_zero() {
            return Poly::zero();
        }
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            r.add_term(*m, c.clone() * s.clone());
        }
        r
    }
    pub fn mul(&self, o: &Poly<F>) -> Poly<F> {
        let mut r = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                r.add_term(m1.mul(m2), c1.clone() * c2.clone());
            }
        }
        r
    }
    pub fn pow(&self, k: u32) -> Poly<F> {
        (0..k).fold(Poly::one(), |acc, _| acc.mul(self))
    }

    /// Partial derivative.
    pub fn diff(&self, v: Var) -> Poly<F> {
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exp(v);
            if e > 0 {
                let mut nm = *m;
                nm.0[v.idx()] -= 1;
                r.add_term(nm, c.clone() * F::from_i64(e as i64));
            }
        }
        r
    }

    /// Antiderivative in `v` with zero constant.
    pub fn antiderivative(&self, v: Var) -> Poly<F> {
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            let mut nm = *m;
            let e = m.exp(v) as i64;
            nm.0[v.idx()] += 1;
            r.add_term(nm, c.clone() / F::from_i64(e + 1));
        }
        r
    }

    /// Replace `v` by a constant.
    pub fn subst_const(&self, v: Var, val: &F) -> Poly<F> {
        let mut r = Poly::zero();
        let mut pows: Vec<F> = vec![F::one()];
        for (m, c) in &self.terms {
            let e = m.exp(v) as usize;
            while pows.len() <= e {
                let last = pows.last().unwrap().clone();
                pows.push(last * val.clone());
            }
            let mut nm = *m;
            nm.0[v.idx()] = 0;
            r.add_term(nm, c.clone() * pows[e].clone());
        }
        r
    }

    /// Replace `v` by the variable `w` (which may already occur).
    pub fn subst_var(&self, v: Var, w: Var) -> Poly<F> {
        if v == w {
            return self.clone();
        }
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            let mut nm = *m;
            nm.0[w.idx()] += nm.0[v.idx()];
            nm.0[v.idx()] = 0;
            r.add_term(nm, c.clone());
        }
        r
    }

    /// Replace `v` by a polynomial.
    pub fn subst_poly(&self, v: Var, q: &Poly<F>) -> Poly<F> {
        let mut r = Poly::zero();
        let mut pows: Vec<Poly<F>> = vec![Poly::one()];
        for (m, c) in &self.terms {
            let e = m.exp(v) as usize;
            while pows.len() <= e {
                let last = pows.last().unwrap().mul(q);
                pows.push(last);
            }
            let mut nm = *m;
            nm.0[v.idx()] = 0;
            r.add_assign(&pows[e].mul(&Poly::monomial(nm, c.clone())));
        }
        r
    }

    pub fn subst_bound(&self, v: Var, b: &Bound) -> Poly<F> {
        match b {
            Bound::Const(c) => self.subst_const(v, &F::from_rat(c)),
            Bound::Var(w) => self.subst_var(v, *w),
        }
    }

    /// Simultaneous permutation of variables: `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[(Var, Var)]) -> Poly<F> {
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            let mut nm = *m;
            for (from, _) in perm {
                nm.0[from.idx()] = 0;
            }
            for (from, to) in perm {
                nm.0[to.idx()] += m.0[from.idx()];
            }
            r.add_term(nm, c.clone());
        }
        r
    }

    pub fn swap(&self, u: Var, v: Var) -> Poly<F> {
        self.permute(&[(u, v), (v, u)])
    }

    /// Definite integral in `v` between two limits.
    pub fn integrate(&self, v: Var, lo: &Bound, hi: &Bound) -> Result<Poly<F>> {
        for b in [lo, hi] {
            if *b == Bound::Var(v) {
                return Err(Error::Poly(format!(
                    "integration bound equals the integration variable {}",
                    v.name()
                )));
            }
        }
        let anti = self.antiderivative(v);
        Ok(anti.subst_bound(v, hi).sub(&anti.subst_bound(v, lo)))
    }

    /// Evaluate at a full point (missing variables must carry any value).
    pub fn eval(&self, pt: &[F; NVARS]) -> F {
        let mut acc = F::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for i in 0..NVARS {
                for _ in 0..m.0[i] {
                    t = t * pt[i].clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    /// Fast floating-point evaluation.
    pub fn eval_f64(&self, pt: &[f64; NVARS]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = c.to_f64();
            for i in 0..NVARS {
                let e = m.0[i];
                if e > 0 {
                    t *= pt[i].powi(e as i32);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn map_coeffs<G: Scalar>(&self, f: impl Fn(&F) -> G) -> Poly<G> {
        let mut r = Poly::zero();
        for (m, c) in &self.terms {
            r.add_term(*m, f(c));
        }
        r
    }

    pub fn to_f64(&self) -> Poly<f64> {
        self.map_coeffs(|c| c.to_f64())
    }
}

impl Poly<Rat> {
    pub fn from_f64(p: &Poly<f64>) -> Poly<Rat> {
        p.map_coeffs(|c| f64_to_rat(*c))
    }
    pub fn eval_rat(&self, pt: &[Rat; NVARS]) -> Rat {
        self.eval(pt)
    }
}

impl<F: Scalar> fmt::Display for Poly<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            let cs = fmt_coeff(c);
            let (neg, mag) = match cs.strip_prefix('-') {
                Some(r) => (true, r.to_string()),
                None => (false, cs),
            };
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let mut factors: Vec<String> = Vec::new();
            if mag != "1" || *m == Mono::ONE {
                factors.push(mag);
            }
            for v in ALL_VARS {
                match m.exp(v) {
                    0 => {}
                    1 => factors.push(v.name().to_string()),
                    e => factors.push(format!("{}^{}", v.name(), e)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

fn fmt_coeff<F: Scalar>(c: &F) -> String {
    // exact rationals print as n/d; floats print with their shortest repr
    let any: &dyn std::any::Any = c;
    if let Some(r) = any.downcast_ref::<Rat>() {
        if r.is_integer() {
            return r.numer().to_string();
        }
        return format!("{}/{}", r.numer(), r.denom());
    }
    format!("{}", c.to_f64())
}

/// Dense matrix of polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMat<F: Scalar = Rat> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Poly<F>>,
}

impl<F: Scalar> PolyMat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMat { rows, cols, data: vec![Poly::zero(); rows * cols] }
    }
    pub fn identity(n: usize) -> Self {
        let mut m = PolyMat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Poly::one());
        }
        m
    }
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Poly<F>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        PolyMat { rows, cols, data }
    }
    /// Constant matrix from row-major entries.
    pub fn from_consts(rows: usize, cols: usize, vals: &[F]) -> Self {
        assert_eq!(vals.len(), rows * cols);
        PolyMat::from_fn(rows, cols, |i, j| Poly::constant(vals[i * cols + j].clone()))
    }
    /// `p * I_n`
    pub fn scalar_identity(n: usize, p: &Poly<F>) -> Self {
        PolyMat::from_fn(n, n, |i, j| if i == j { p.clone() } else { Poly::zero() })
    }
    pub fn get(&self, i: usize, j: usize) -> &Poly<F> {
        &self.data[i * self.cols + j]
    }
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut Poly<F> {
        &mut self.data[i * self.cols + j]
    }
    pub fn set(&mut self, i: usize, j: usize, p: Poly<F>) {
        self.data[i * self.cols + j] = p;
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|p| p.is_zero())
    }
    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }
    pub fn degree(&self) -> u32 {
        self.data.iter().map(|p| p.degree()).max().unwrap_or(0)
    }
    pub fn vars(&self) -> VarSet {
        self.data.iter().fold(VarSet::EMPTY, |s, p| s.union(p.vars()))
    }
    fn check_same(&self, o: &Self, what: &str) -> Result<()> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(Error::Dim(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        Ok(())
    }
    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.check_same(o, "add")?;
        Ok(PolyMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.add(b)).collect(),
        })
    }
    pub fn add(&self, o: &Self) -> Self {
        self.try_add(o).expect("dimension mismatch in PolyMat::add")
    }
    pub fn add_assign(&mut self, o: &Self) {
        assert!(self.rows == o.rows && self.cols == o.cols, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            a.add_assign(b);
        }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn neg(&self) -> Self {
        self.map(|p| p.neg())
    }
    pub fn scale(&self, s: &F) -> Self {
        self.map(|p| p.scale(s))
    }
    pub fn scale_poly(&self, s: &Poly<F>) -> Self {
        self.map(|p| p.mul(s))
    }
    pub fn map(&self, f: impl Fn(&Poly<F>) -> Poly<F>) -> Self {
        PolyMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }
    pub fn try_mul(&self, o: &Self) -> Result<Self> {
        if self.cols != o.rows {
            return Err(Error::Dim(format!(
                "mul: {}x{} times {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        let mut r = PolyMat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let b = o.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    r.data[i * o.cols + j].add_assign(&a.mul(b));
                }
            }
        }
        Ok(r)
    }
    pub fn mul(&self, o: &Self) -> Self {
        self.try_mul(o).expect("dimension mismatch in PolyMat::mul")
    }
    pub fn transpose(&self) -> Self {
        PolyMat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }
    pub fn submatrix(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> Self {
        PolyMat::from_fn(nr, nc, |i, j| self.get(r0 + i, c0 + j).clone())
    }
    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self.set(r0 + i, c0 + j, b.get(i, j).clone());
            }
        }
    }
    pub fn vstack(parts: &[Self]) -> Self {
        let cols = parts.first().map(|p| p.cols).unwrap_or(0);
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut r = PolyMat::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            assert_eq!(p.cols, cols);
            r.set_block(r0, 0, p);
            r0 += p.rows;
        }
        r
    }
    pub fn hstack(parts: &[Self]) -> Self {
        let rows = parts.first().map(|p| p.rows).unwrap_or(0);
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut r = PolyMat::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            assert_eq!(p.rows, rows);
            r.set_block(0, c0, p);
            c0 += p.cols;
        }
        r
    }
    pub fn diff(&self, v: Var) -> Self {
        self.map(|p| p.diff(v))
    }
    pub fn subst_var(&self, v: Var, w: Var) -> Self {
        self.map(|p| p.subst_var(v, w))
    }
    pub fn subst_const(&self, v: Var, c: &F) -> Self {
        self.map(|p| p.subst_const(v, c))
    }
    pub fn permute(&self, perm: &[(Var, Var)]) -> Self {
        self.map(|p| p.permute(perm))
    }
    pub fn integrate(&self, v: Var, lo: &Bound, hi: &Bound) -> Result<Self> {
        let data = self.data.iter().map(|p| p.integrate(v, lo, hi)).collect::<Result<_>>()?;
        Ok(PolyMat { rows: self.rows, cols: self.cols, data })
    }
    /// Constant entries, if every entry is constant.
    pub fn as_consts(&self) -> Option<Vec<F>> {
        self.data.iter().map(|p| p.as_const()).collect()
    }
    pub fn eval_f64(&self, pt: &[f64; NVARS]) -> Vec<f64> {
        self.data.iter().map(|p| p.eval_f64(pt)).collect()
    }
    pub fn to_f64(&self) -> PolyMat<f64> {
        PolyMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|p| p.to_f64()).collect() }
    }
}

impl<F: Scalar> fmt::Display for PolyMat<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

pub fn rat_is_neg(r: &Rat) -> bool {
    r.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Poly {
        Poly::var(Var::X)
    }
    fn y() -> Poly {
        Poly::var(Var::Y)
    }
    fn th() -> Poly {
        Poly::var(Var::Th)
    }
    fn nu() -> Poly {
        Poly::var(Var::Nu)
    }
    fn c(n: i64, d: i64) -> Poly {
        Poly::constant(rat(n, d))
    }

    #[test]
    fn add_cancels_and_merges() {
        assert_eq!(x().add(&th()).add(&th().neg()), x());
        let m = PolyMat::from_fn(2, 2, |i, j| c((i + j) as i64, 1).mul(&x()));
        assert_eq!(PolyMat::zeros(2, 2).add(&m), m);
        let p = c(2, 1).mul(&x().pow(2)).mul(&y());
        let q = c(3, 1).mul(&x().pow(2)).mul(&y());
        assert_eq!(p.add(&q), c(5, 1).mul(&x().pow(2)).mul(&y()));
    }

    #[test]
    fn matrix_products() {
        let a = PolyMat::from_fn(1, 1, |_, _| x());
        let b = PolyMat::from_fn(1, 1, |_, _| y());
        assert_eq!(a.mul(&b).get(0, 0), &x().mul(&y()));
        let m = PolyMat::from_fn(2, 3, |i, j| c(i as i64 + 1, j as i64 + 1).mul(&x()));
        assert_eq!(PolyMat::identity(2).mul(&m), m);
        let r = PolyMat { rows: 1, cols: 2, data: vec![Poly::one(), x()] };
        let s = PolyMat { rows: 2, cols: 1, data: vec![y(), Poly::one()] };
        assert_eq!(r.mul(&s).get(0, 0), &y().add(&x()));
        assert!(r.try_mul(&r).is_err());
    }

    #[test]
    fn integration_examples() {
        let z = Bound::Const(rat(0, 1));
        let p = x().sub(&th()).scale(&rat(4, 1));
        let r = p.integrate(Var::Th, &z, &Bound::Var(Var::X)).unwrap();
        assert_eq!(r, c(2, 1).mul(&x().pow(2)));
        assert!(Poly::<Rat>::zero().integrate(Var::Th, &z, &Bound::Const(rat(1, 1))).unwrap().is_zero());
        let q = x().sub(&th()).mul(&y().sub(&nu())).scale(&rat(4, 1));
        let r = q
            .integrate(Var::Nu, &z, &Bound::Var(Var::Y))
            .unwrap()
            .integrate(Var::Th, &z, &Bound::Var(Var::X))
            .unwrap();
        assert_eq!(r, x().pow(2).mul(&y().pow(2)));
        assert_eq!(r.diff(Var::X).diff(Var::X).diff(Var::Y).diff(Var::Y), c(4, 1));
        assert!(x().integrate(Var::X, &z, &Bound::Var(Var::X)).is_err());
    }

    #[test]
    fn substitution_and_derivatives() {
        assert!(x().sub(&th()).subst_var(Var::Th, Var::X).is_zero());
        assert_eq!(y().sub(&nu()).subst_const(Var::Nu, &rat(0, 1)), y());
        assert_eq!(x().pow(2).mul(&y()).diff(Var::X), c(2, 1).mul(&x()).mul(&y()));
        assert!(c(7, 3).diff(Var::X).is_zero());
        assert_eq!(x().sub(&th()).mul(&y().sub(&nu())).diff(Var::X).diff(Var::Y), Poly::one());
    }

    #[test]
    fn evaluation() {
        let mut pt: [Rat; NVARS] = Default::default();
        pt[0] = rat(1, 2);
        pt[1] = rat(1, 3);
        assert_eq!(x().add(&y()).eval(&pt), rat(5, 6));
        assert_eq!(Poly::<Rat>::zero().eval(&pt), rat(0, 1));
        let mut one: [Rat; NVARS] = Default::default();
        one[0] = rat(1, 1);
        one[1] = rat(1, 1);
        assert_eq!(x().pow(2).mul(&y().pow(2)).eval(&one), rat(1, 1));
    }

    #[test]
    fn basis_order_and_size() {
        let b = monomial_basis(1, VarSet::of(&[Var::X, Var::Y]));
        assert_eq!(b, vec![Mono::ONE, Mono::var(Var::X, 1), Mono::var(Var::Y, 1)]);
        assert_eq!(monomial_basis(0, VarSet::of(&[Var::X, Var::Y])), vec![Mono::ONE]);
        let b = monomial_basis(2, VarSet::of(&[Var::X]));
        assert_eq!(b, vec![Mono::ONE, Mono::var(Var::X, 1), Mono::var(Var::X, 2)]);
        let b = monomial_basis(2, VarSet::of(&[Var::X, Var::Y]));
        assert_eq!(b[3], Mono::var(Var::X, 2));
        assert_eq!(b[4], Mono([1, 1, 0, 0, 0, 0]));
        assert_eq!(b[5], Mono::var(Var::Y, 2));
        assert_eq!(monomial_basis(3, VarSet::of(&[Var::X, Var::Y, Var::Th, Var::Nu])).len(), 35);
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rat("15.0"), Some(rat(15, 1)));
        assert_eq!(parse_rat("-1/2"), Some(rat(-1, 2)));
        assert_eq!(parse_rat("1e-3"), Some(rat(1, 1000)));
        assert_eq!(parse_rat("19.736"), Some(rat(19736, 1000)));
        assert_eq!(parse_rat(".5"), Some(rat(1, 2)));
        assert_eq!(parse_rat("abc"), None);
        assert_eq!(parse_rat("1/0"), None);
    }

    #[test]
    fn display() {
        let p = x().mul(&th()).sub(&c(1, 2).mul(&y().pow(2)));
        assert_eq!(p.to_string(), "x*θ - 1/2*y^2");
    }
}
