//! PDE to PIE conversion.
//!
//! The fundamental state is `û = 𝒟u = (u0, ∂x∂y u1, ∂x²∂y² u2)`. The map back,
//! `u = 𝒯û`, folds the boundary conditions in, and the generator is
//! `𝒜 = Σ A_ij ∂x^i ∂y^j (N_max(i,j) 𝒯)`.
//!
//! `T` is computed twice: by generic composition `K2 − K1∘G` and from the
//! expanded kernel formulas. The two must agree exactly.

use std::fmt::Write as _;

use num::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::calculus::{diff_power_op, inverse_011};
use crate::error::{Error, Result};
use crate::op::{
    compose_011, compose_011_with_2dto011, compose_011to2d_with_2dto011, from_y, to_y, Comp, N011To2d, N2d,
    N2dTo011, PiOp, Ty, N011,
};
use crate::pde::{n_matrix, PdeSpec};
use crate::poly::{Bound, Poly, PolyMat, Rat, Rect, Var};
use crate::ratmat::RatMat;

/// Block matrix with `p·I` entries; `rs`, `cs` are the block sizes.
fn blocks(rs: &[usize], cs: &[usize], entries: &[(usize, usize, Poly)]) -> PolyMat {
    let off = |v: &[usize], k: usize| v[..k].iter().sum::<usize>();
    let mut m = PolyMat::zeros(rs.iter().sum(), cs.iter().sum());
    for (bi, bj, p) in entries {
        let (r, c) = (rs[*bi], cs[*bj]);
        assert_eq!(r, c, "identity block must be square");
        let (r0, c0) = (off(rs, *bi), off(cs, *bj));
        for k in 0..r {
            m.set(r0 + k, c0 + k, p.clone());
        }
    }
    m
}

fn v(x: Var) -> Poly {
    Poly::var(x)
}
fn k(c: &Rat) -> Poly {
    Poly::constant(c.clone())
}
fn one() -> Poly {
    Poly::one()
}

/// Boundary reconstruction operators.
#[derive(Clone, Debug, PartialEq)]
pub struct HK {
    /// `Λ_bf u = H1 Λ_bc u + H2 û`
    pub h1: N011,
    pub h2: N2dTo011,
    /// `u = K1 Λ_bc u + K2 û`
    pub k1: N011To2d,
    pub k2: N2d,
}

pub fn build_hk(n0: usize, n1: usize, n2: usize, rect: &Rect) -> HK {
    let (a, b, c, d) = (&rect.a, &rect.b, &rect.c, &rect.d);
    let ba = k(&(b - a));
    let dc = k(&(d - c));
    let xa = v(Var::X).sub(&k(a));
    let yc = v(Var::Y).sub(&k(c));
    let xt = v(Var::X).sub(&v(Var::Th));
    let yn = v(Var::Y).sub(&v(Var::Nu));
    let bt = k(b).sub(&v(Var::Th));
    let dn = k(d).sub(&v(Var::Nu));

    let st = [n0, n1, n2];
    let c0 = [n1, n2, n2, n2, n2];
    let c1 = [n1, n2, n2];
    let mut r0 = vec![n1; 4];
    r0.extend([n2; 16]);
    let r1 = [n1, n1, n2, n2, n2, n2];

    let k30 = blocks(&st, &c0, &[(1, 0, one()), (2, 1, one()), (2, 2, xa.clone()), (2, 3, yc.clone()), (2, 4, yc.mul(&xa))]);
    let k31 = blocks(&st, &c1, &[(1, 0, one()), (2, 1, xt.clone()), (2, 2, yc.mul(&xt))]);
    let k32 = blocks(&st, &c1, &[(1, 0, one()), (2, 1, yn.clone()), (2, 2, xa.mul(&yn))]);
    let k33 = blocks(&st, &st, &[(1, 1, one()), (2, 2, xt.mul(&yn))]);
    let t00 = blocks(&st, &st, &[(0, 0, one())]);

    let mut e = vec![(0, 0, one()), (1, 0, one()), (2, 0, one()), (3, 0, one())];
    e.extend([(4, 1, one()), (5, 1, one()), (5, 2, ba.clone()), (6, 1, one()), (6, 3, dc.clone())]);
    e.extend([(7, 1, one()), (7, 2, ba.clone()), (7, 3, dc.clone()), (7, 4, dc.mul(&ba))]);
    e.extend([(8, 2, one()), (9, 2, one()), (10, 2, one()), (10, 4, dc.clone()), (11, 2, one()), (11, 4, dc.clone())]);
    e.extend([(12, 3, one()), (13, 3, one()), (13, 4, ba.clone()), (14, 3, one()), (15, 3, one()), (15, 4, ba.clone())]);
    e.extend((16..20).map(|r| (r, 4, one())));
    let h00 = blocks(&r0, &c0, &e);

    let h01 = blocks(
        &r0,
        &c1,
        &[
            (1, 0, one()),
            (3, 0, one()),
            (5, 1, bt.clone()),
            (7, 1, bt.clone()),
            (7, 2, dc.mul(&bt)),
            (9, 1, one()),
            (11, 1, one()),
            (11, 2, dc.clone()),
            (13, 2, bt.clone()),
            (15, 2, bt.clone()),
            (17, 2, one()),
            (19, 2, one()),
        ],
    );
    let h02 = blocks(
        &r0,
        &c1,
        &[
            (2, 0, one()),
            (3, 0, one()),
            (6, 1, dn.clone()),
            (7, 1, dn.clone()),
            (7, 2, ba.mul(&dn)),
            (10, 2, dn.clone()),
            (11, 2, dn.clone()),
            (14, 1, one()),
            (15, 1, one()),
            (15, 2, ba.clone()),
            (18, 2, one()),
            (19, 2, one()),
        ],
    );
    let h11 = blocks(&r1, &c1, &[(0, 0, one()), (1, 0, one()), (2, 1, one()), (3, 1, one()), (3, 2, dc.clone()), (4, 2, one()), (5, 2, one())]);
    let h22 = blocks(&r1, &c1, &[(0, 0, one()), (1, 0, one()), (2, 1, one()), (3, 1, one()), (3, 2, ba.clone()), (4, 2, one()), (5, 2, one())]);
    let h13 = blocks(&r1, &st, &[(1, 1, one()), (3, 2, dn.clone()), (5, 2, one())]);
    let h23 = blocks(&r1, &st, &[(1, 1, one()), (3, 2, bt.clone()), (5, 2, one())]);
    let h03 = blocks(
        &r0,
        &st,
        &[(3, 1, one()), (7, 2, dn.mul(&bt)), (11, 2, dn.clone()), (15, 2, bt.clone()), (19, 2, one())],
    );

    let (m0, m1) = (4 * n1 + 16 * n2, 2 * n1 + 4 * n2);
    let (p0, p1) = (n1 + 4 * n2, n1 + 2 * n2);
    let n = n0 + n1 + n2;
    let mut h1 = N011::zero(m0, m1, p0, p1);
    h1.b00 = h00;
    h1.b01 = h01;
    h1.b02 = h02;
    h1.b11.n[0] = h11;
    h1.b22.n[0] = h22;
    let mut h2 = N2dTo011::zero(m0, m1, n);
    h2.s0 = h03;
    h2.s1.d[0] = h13;
    h2.s2.d[0] = h23;
    let mut k1 = N011To2d::zero(n, p0, p1);
    k1.t0 = k30;
    k1.t1.e[1] = k31;
    k1.t2.e[1] = k32;
    let mut k2 = N2d::zero(n, n);
    k2.n[0][0] = t00;
    k2.n[1][1] = k33;
    HK { h1, h2, k1, k2 }
}

/// Intermediate bundles of the conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Intermediates {
    pub hk: HK,
    /// `B H1`
    pub e: N011,
    /// `B H2`
    pub f: N2dTo011,
    pub ehat: N011,
    /// `Ê F`
    pub g: N2dTo011,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WellPosednessReport {
    pub well_posed: bool,
    /// name of the singular factor, when not well-posed
    pub singular: Option<String>,
    pub message: String,
}

/// Invertibility of `B H1`.
pub fn check_wellposed(spec: &PdeSpec) -> WellPosednessReport {
    let hk = build_hk(spec.n0, spec.n1, spec.n2, &spec.rect);
    let r = compose_011(&spec.b, &hk.h1, &spec.rect).and_then(|e| inverse_011(&e, &spec.rect));
    match r {
        Ok(_) => WellPosednessReport { well_posed: true, singular: None, message: "B H1 is invertible".into() },
        Err(e) => {
            let singular = match &e {
                Error::Singular(s) => Some(s.clone()),
                _ => None,
            };
            WellPosednessReport { well_posed: false, singular, message: e.to_string() }
        }
    }
}

// ---------------------------------------------------------------------------
// Expanded formulas. Kernels use the canonical variables: outputs x, y,
// integration variables θ, ν, dummies η, μ.

fn ren(m: &PolyMat, p: &[(Var, Var)]) -> PolyMat {
    m.permute(p)
}
fn int(m: &PolyMat, v: Var, lo: &Rat, hi: &Rat) -> PolyMat {
    m.integrate(v, &Bound::Const(lo.clone()), &Bound::Const(hi.clone())).expect("constant limits")
}
fn int_to(m: &PolyMat, v: Var, lo: &Rat, hi: Var) -> PolyMat {
    m.integrate(v, &Bound::Const(lo.clone()), &Bound::Var(hi)).expect("distinct limit")
}
fn sep(n: &crate::op::N1d, what: &str) -> Result<PolyMat> {
    if n.n[1] != n.n[2] {
        return Err(Error::Unsupported(format!("{what}: lower and upper kernels differ")));
    }
    Ok(n.n[1].clone())
}

/// `E = B H1` from the expanded formulas.
pub fn explicit_e(b: &N011, h1: &N011, rect: &Rect) -> Result<N011> {
    use Var::*;
    let ((r0, r1), _) = b.signature();
    let (_, (c0, c1)) = h1.signature();
    let b11 = sep(&b.b11, "B11")?;
    let b22 = sep(&b.b22, "B22")?;
    let h11 = &h1.b11.n[0];
    let h22y = to_y(&h1.b22.n[0]);
    let mut e = N011::zero(r0, r1, c0, c1);
    e.b00 = b.b00.mul(&h1.b00)
        .add(&int(&b.b01.mul(&ren(&h1.b10, &[(X, Th)])), Th, &rect.a, &rect.b))
        .add(&int(&b.b02.mul(&ren(&h1.b20, &[(Y, Nu)])), Nu, &rect.c, &rect.d));
    e.b01 = b.b00.mul(&h1.b01).add(&b.b01.mul(&ren(h11, &[(X, Th)])));
    e.b02 = b.b00.mul(&h1.b02).add(&b.b02.mul(&ren(&h22y, &[(Y, Nu)])));
    e.b10 = b.b10.mul(&h1.b00);
    e.b20 = b.b20.mul(&h1.b00);
    e.b11.n[0] = b.b11.n[0].mul(h11);
    let e11 = b.b10.mul(&h1.b01).add(&b11.mul(&ren(h11, &[(X, Th)])));
    e.b11.n[1] = e11.clone();
    e.b11.n[2] = e11;
    e.b22.n[0] = b.b22.n[0].mul(&h1.b22.n[0]);
    let e22y = b.b20.mul(&h1.b02).add(&to_y(&b22).mul(&ren(&h22y, &[(Y, Nu)])));
    e.b22.n[1] = from_y(&e22y);
    e.b22.n[2] = from_y(&e22y);
    e.b12 = b.b10.mul(&h1.b02).add(&b.b12.mul(&ren(&h22y, &[(Y, Nu)])));
    e.b21 = b.b20.mul(&h1.b01).add(&b.b21.mul(&ren(h11, &[(X, Th)])));
    Ok(e)
}

/// The five kernels of a bundle `L2[x,y] -> 011` whose lower and upper kernels agree.
struct Fk {
    /// `R <- XY`, `(θ, ν)`
    f0: PolyMat,
    /// `X <- XY` multiplier part, `(x, ν)`
    f10: PolyMat,
    /// `X <- XY` integral part, `(x, θ, ν)`
    f11: PolyMat,
    /// `Y <- XY` multiplier part, `(θ, y)`
    f20: PolyMat,
    /// `Y <- XY` integral part, `(θ, y, ν)`
    f21: PolyMat,
}

impl Fk {
    fn from(f: &N2dTo011) -> Result<Fk> {
        if f.s1.d[1] != f.s1.d[2] || f.s2.d[1] != f.s2.d[2] {
            return Err(Error::Unsupported("lower and upper kernels differ".into()));
        }
        Ok(Fk { f0: f.s0.clone(), f10: f.s1.d[0].clone(), f11: f.s1.d[1].clone(), f20: f.s2.d[0].clone(), f21: f.s2.d[1].clone() })
    }
    fn to(&self) -> N2dTo011 {
        let mut r = N2dTo011::zero(self.f0.rows, self.f10.rows, self.f0.cols);
        r.s0 = self.f0.clone();
        r.s1.d = [self.f10.clone(), self.f11.clone(), self.f11.clone()];
        r.s2.d = [self.f20.clone(), self.f21.clone(), self.f21.clone()];
        r
    }
}

/// `F = B H2` from the expanded formulas.
pub fn explicit_f(b: &N011, h2: &N2dTo011) -> Result<N2dTo011> {
    use Var::*;
    let b11 = sep(&b.b11, "B11")?;
    let b22y = to_y(&sep(&b.b22, "B22")?);
    let h03 = &h2.s0;
    let h13 = &h2.s1.d[0];
    let h23 = &h2.s2.d[0];
    let h13t = ren(h13, &[(X, Th)]);
    let h23n = ren(h23, &[(Y, Nu)]);
    Ok(Fk {
        f0: b.b00.mul(h03).add(&b.b01.mul(&h13t)).add(&b.b02.mul(&h23n)),
        f10: b.b11.n[0].mul(h13),
        f11: b.b10.mul(h03).add(&b11.mul(&h13t)).add(&b.b12.mul(&h23n)),
        f20: to_y(&b.b22.n[0]).mul(h23),
        f21: b.b20.mul(h03).add(&b22y.mul(&h23n)).add(&b.b21.mul(&h13t)),
    }
    .to())
}

/// `G = Ê F` from the expanded formulas.
pub fn explicit_g(eh: &N011, f: &N2dTo011, rect: &Rect) -> Result<N2dTo011> {
    use Var::*;
    let (a, b, c, d) = (&rect.a, &rect.b, &rect.c, &rect.d);
    let fk = Fk::from(f)?;
    let e11 = sep(&eh.b11, "Ê11")?;
    let e22y = to_y(&sep(&eh.b22, "Ê22")?);
    let e22y0 = to_y(&eh.b22.n[0]);
    // F1^1 with its output x moved to the dummy η; F2^1 with its output y moved to μ
    let f11_eta = ren(&fk.f11, &[(X, Eta)]);
    let f21_mu = ren(&fk.f21, &[(Y, Mu)]);
    let f10_t = ren(&fk.f10, &[(X, Th)]);
    let f20_n = ren(&fk.f20, &[(Y, Nu)]);

    let g0 = eh.b00.mul(&fk.f0)
        .add(&eh.b01.mul(&f10_t))
        .add(&int(&ren(&eh.b01, &[(Th, Eta)]).mul(&f11_eta), Eta, a, b))
        .add(&eh.b02.mul(&f20_n))
        .add(&int(&ren(&eh.b02, &[(Nu, Mu)]).mul(&f21_mu), Mu, c, d));
    let g10 = eh.b11.n[0].mul(&fk.f10);
    let g11 = eh.b10.mul(&fk.f0)
        .add(&eh.b11.n[0].mul(&fk.f11))
        .add(&e11.mul(&f10_t))
        .add(&int(&ren(&e11, &[(Th, Eta)]).mul(&f11_eta), Eta, a, b))
        .add(&eh.b12.mul(&f20_n))
        .add(&int(&ren(&eh.b12, &[(Nu, Mu)]).mul(&f21_mu), Mu, c, d));
    let g20 = e22y0.mul(&fk.f20);
    let g21 = eh.b20.mul(&fk.f0)
        .add(&e22y0.mul(&fk.f21))
        .add(&e22y.mul(&f20_n))
        .add(&int(&ren(&e22y, &[(Nu, Mu)]).mul(&f21_mu), Mu, c, d))
        .add(&eh.b21.mul(&f10_t))
        .add(&int(&ren(&eh.b21, &[(Th, Eta)]).mul(&f11_eta), Eta, a, b));
    Ok(Fk { f0: g0, f10: g10, f11: g11, f20: g20, f21: g21 }.to())
}

/// `T` from the expanded formulas.
///
/// In the `x`-integral of `T22` the factor `G1^1` is taken with output `η` and
/// inputs `(θ, ν)`; in the `y`-integral `G2^1` has output `μ` and inputs `(θ, ν)`.
/// Both readings reproduce the closed forms of the heat and wave examples.
pub fn explicit_t(hk: &HK, g: &N2dTo011, rect: &Rect) -> Result<N2d> {
    use Var::*;
    let gk = Fk::from(g)?;
    let k30 = &hk.k1.t0;
    let k31 = &hk.k1.t1.e[1];
    let k32 = &hk.k1.t2.e[1];
    let t22 = k30
        .mul(&gk.f0)
        .add(&int_to(&ren(k31, &[(Th, Eta)]).mul(&ren(&gk.f11, &[(X, Eta)])), Eta, &rect.a, X))
        .add(&int_to(&ren(k32, &[(Nu, Mu)]).mul(&ren(&gk.f21, &[(Y, Mu)])), Mu, &rect.c, Y))
        .neg();
    let t21 = k32.mul(&ren(&gk.f20, &[(Y, Nu)])).neg().add(&t22);
    let t12 = k31.mul(&ren(&gk.f10, &[(X, Th)])).neg().add(&t22);
    let t11 = hk.k2.n[1][1].add(&t21).add(&t12).sub(&t22);
    let n = t22.rows;
    let mut t = N2d::zero(n, n);
    t.n[0][0] = hk.k2.n[0][0].clone();
    t.n[1][1] = t11;
    t.n[1][2] = t12;
    t.n[2][1] = t21;
    t.n[2][2] = t22;
    Ok(t)
}

/// `E, F, Ê, G`, cross-checked between the generic and expanded constructions.
pub fn build_efg(spec: &PdeSpec, hk: HK) -> Result<Intermediates> {
    let r = &spec.rect;
    let e = compose_011(&spec.b, &hk.h1, r).map_err(|e| e.at("E = B H1"))?;
    let ex = explicit_e(&spec.b, &hk.h1, r)?;
    if e != ex {
        return Err(Error::Op("E: composition and expanded formulas disagree".into()));
    }
    let f = compose_011_with_2dto011(&spec.b, &hk.h2, r).map_err(|e| e.at("F = B H2"))?;
    if f != explicit_f(&spec.b, &hk.h2)? {
        return Err(Error::Op("F: composition and expanded formulas disagree".into()));
    }
    let ehat = inverse_011(&e, r).map_err(|e| e.at("inverse of B H1"))?;
    let g = compose_011_with_2dto011(&ehat, &f, r).map_err(|e| e.at("G = Ê F"))?;
    if g != explicit_g(&ehat, &f, r)? {
        return Err(Error::Op("G: composition and expanded formulas disagree".into()));
    }
    Ok(Intermediates { hk, e, f, ehat, g })
}

/// `T = K2 − K1 G`, cross-checked against the expanded formulas.
pub fn build_t(spec: &PdeSpec) -> Result<(N2d, Intermediates)> {
    let hk = build_hk(spec.n0, spec.n1, spec.n2, &spec.rect);
    let im = build_efg(spec, hk)?;
    let r = &spec.rect;
    let kg = compose_011to2d_with_2dto011(&im.hk.k1, &im.g, r).map_err(|e| e.at("K1 G"))?;
    let t = N2d::from_op(&im.hk.k2.to_op(r)?.sub(&kg.to_op(r)?))?;
    if t != explicit_t(&im.hk, &im.g, r)? {
        return Err(Error::Op("T: composition and expanded formulas disagree".into()));
    }
    Ok((t, im))
}

fn pm(m: &RatMat) -> PolyMat {
    m.to_polymat()
}

/// Left multiplication of the `L2[x,y]` rows by a constant matrix.
fn premul_2d(op: &PiOp, m: &PolyMat) -> Result<PiOp> {
    let e = |r: usize| PolyMat::zeros(0, r);
    op.premul([&e(op.rows[0]), &e(op.rows[1]), &e(op.rows[2]), m])
}

/// `𝒜 = Σ A_ij ∂x^i ∂y^j (N_max(i,j) 𝒯)`.
pub fn build_a(spec: &PdeSpec, t: &N2d) -> Result<N2d> {
    let r = &spec.rect;
    let n = spec.n();
    let top = t.to_op(r)?;
    let mut acc = PiOp::zero(top.rows, top.cols, r);
    for i in 0..3 {
        for j in 0..3 {
            let Some(aij) = &spec.a[i][j] else { continue };
            let sel = n_matrix(i.max(j), spec.n0, spec.n1, spec.n2);
            let stage = format!("A{i}{j} term");
            let nt = premul_2d(&top, &pm(&sel)).map_err(|e| e.at(stage.clone()))?;
            let d = diff_power_op(&nt, i, j).map_err(|e| e.at(stage.clone()))?;
            acc = acc.add(&premul_2d(&d, &pm(aij)).map_err(|e| e.at(stage))?);
        }
    }
    debug_assert_eq!(acc.rows[3], n);
    N2d::from_op(&acc)
}

/// A PIE `𝒯 ẋ = 𝒜 x` on `R^n_ode × L2[x,y]^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiePair {
    pub rect: Rect,
    pub t: PiOp,
    pub a: PiOp,
    pub n_ode: usize,
    pub n: usize,
    pub intermediates: Intermediates,
    pub spec: PdeSpec,
}

impl PiePair {
    /// PDE part of `𝒯`.
    pub fn t_2d(&self) -> N2d {
        N2d::from_op(&self.t.select([(0, 0), (0, 0), (0, 0), (0, self.n)], [(0, 0), (0, 0), (0, 0), (0, self.n)]))
            .expect("2D block")
    }
    /// PDE part of `𝒜`.
    pub fn a_2d(&self) -> N2d {
        N2d::from_op(&self.a.select([(0, 0), (0, 0), (0, 0), (0, self.n)], [(0, 0), (0, 0), (0, 0), (0, self.n)]))
            .expect("2D block")
    }
}

/// Full conversion; an ODE section produces the coupled PIE.
pub fn convert(spec: &PdeSpec) -> Result<PiePair> {
    spec.check()?;
    let r = &spec.rect;
    let (t, im) = build_t(spec).map_err(|e| e.at("T map"))?;
    check_t_structure(&t, spec)?;
    let a = build_a(spec, &t).map_err(|e| e.at("generator"))?;
    let Some(ode) = &spec.ode else {
        return Ok(PiePair { rect: r.clone(), t: t.to_op(r)?, a: a.to_op(r)?, n_ode: 0, n: spec.n(), intermediates: im, spec: spec.clone() });
    };
    let (no, n) = (ode.n, spec.n());
    let dims = [no, 0, 0, n];
    let mut tf = PiOp::zero(dims, dims, r);
    tf.add_term(Comp::R, Comp::R, Ty::C, Ty::C, PolyMat::identity(no))?;
    for (o, i, tx, ty, kk) in t.to_op(r)?.terms() {
        tf.add_term(o, i, tx, ty, kk.clone())?;
    }
    let mut af = PiOp::zero(dims, dims, r);
    af.add_term(Comp::R, Comp::R, Ty::C, Ty::C, pm(&ode.closed_loop()))?;
    let ro = readout_kernel(&t, &ode.at, r).map_err(|e| e.at("ODE readout"))?;
    af.add_term(Comp::R, Comp::XY, Ty::I, Ty::I, pm(&ode.b).mul(&ro))?;
    for (o, i, tx, ty, kk) in a.to_op(r)?.terms() {
        af.add_term(o, i, tx, ty, kk.clone())?;
    }
    Ok(PiePair { rect: r.clone(), t: tf, a: af, n_ode: no, n, intermediates: im, spec: spec.clone() })
}

/// Kernel `R(θ, ν)` with `u(x0, y0) = ∫∫ R(θ, ν) û(θ, ν)`, for a corner `(x0, y0)`.
pub fn readout_kernel(t: &N2d, at: &(Rat, Rat), rect: &Rect) -> Result<PolyMat> {
    let (n, m) = t.dims();
    let mut out = PolyMat::zeros(n, m);
    let xs = dir_side(&at.0, &rect.a, &rect.b)?;
    let ys = dir_side(&at.1, &rect.c, &rect.d)?;
    for i in 0..3 {
        for j in 0..3 {
            let kk = &t.n[i][j];
            if kk.is_zero() {
                continue;
            }
            if i == 0 || j == 0 {
                return Err(Error::Unsupported("point value of a state without spatial regularity".into()));
            }
            // lower integrals vanish at the left end, upper ones at the right end
            if (i == 1) != xs || (j == 1) != ys {
                continue;
            }
            out.add_assign(&kk.subst_const(Var::X, &at.0).subst_const(Var::Y, &at.1));
        }
    }
    Ok(out)
}

/// `true` for the right end, `false` for the left.
fn dir_side(p: &Rat, lo: &Rat, hi: &Rat) -> Result<bool> {
    if p == lo {
        Ok(false)
    } else if p == hi {
        Ok(true)
    } else {
        Err(Error::Unsupported("readout point must be a corner".into()))
    }
}

/// `T00` is the `n0` selector and the remaining rows carry no multipliers.
pub fn check_t_structure(t: &N2d, spec: &PdeSpec) -> Result<()> {
    let n = spec.n();
    let sel = RatMat::from_fn(n, n, |i, j| if i == j && i < spec.n0 { Rat::one() } else { Rat::zero() });
    let ok = t.n[0][0] == sel.to_polymat()
        && (0..3).all(|j| j == 0 || t.n[0][j].is_zero())
        && (0..3).all(|i| i == 0 || t.n[i][0].is_zero());
    if !ok {
        return Err(Error::Op("T has multiplier terms outside the n0 rows".into()));
    }
    Ok(())
}

/// `𝒟𝒯`: stacks `N0 𝒯` restricted to `u0`, `∂x∂y` of the `u1` rows and `∂x²∂y²` of the `u2` rows.
pub fn d_of_t(t: &N2d, spec: &PdeSpec) -> Result<N2d> {
    let r = &spec.rect;
    let (n0, n1, n2) = (spec.n0, spec.n1, spec.n2);
    let top = t.to_op(r)?;
    let rows = |lo: usize, k: usize| {
        RatMat::from_fn(k, n0 + n1 + n2, |i, j| if j == lo + i { Rat::one() } else { Rat::zero() }).to_polymat()
    };
    let p0 = premul_2d(&top, &rows(0, n0))?;
    let p1 = diff_power_op(&premul_2d(&top, &rows(n0, n1))?, 1, 1)?;
    let p2 = diff_power_op(&premul_2d(&top, &rows(n0 + n1, n2))?, 2, 2)?;
    let n = n0 + n1 + n2;
    let mut out = N2d::zero(n, n);
    for (off, p) in [(0, p0), (n0, p1), (n0 + n1, p2)] {
        let b = N2d::from_op(&p)?;
        for i in 0..3 {
            for j in 0..3 {
                out.n[i][j].set_block(off, 0, &b.n[i][j]);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Output.

fn comp_name(c: Comp) -> &'static str {
    match c {
        Comp::R => "R",
        Comp::X => "X",
        Comp::Y => "Y",
        Comp::XY => "XY",
    }
}

/// Human-readable kernel dump.
pub fn emit_pie(p: &PiePair) -> String {
    let mut o = String::new();
    let r = &p.rect;
    writeln!(o, "# PIE on [{}, {}] x [{}, {}], {} ODE states, {} PDE states", r.a, r.b, r.c, r.d, p.n_ode, p.n).unwrap();
    writeln!(o, "# types per direction: C none, I full integral, B function of output, 0 multiplier, 1 lower, 2 upper").unwrap();
    for (name, op) in [("T", &p.t), ("A", &p.a)] {
        writeln!(o, "[{name}]").unwrap();
        for (out, inp, tx, ty, k) in op.terms() {
            writeln!(o, "{} <- {} ({},{}) {}x{}", comp_name(out), comp_name(inp), tx.name(), ty.name(), k.rows, k.cols).unwrap();
            for i in 0..k.rows {
                let row: Vec<String> = (0..k.cols).map(|j| k.get(i, j).to_string()).collect();
                writeln!(o, "  [{}]", row.join(", ")).unwrap();
            }
        }
    }
    o
}

#[derive(Serialize)]
struct JTerm {
    row: usize,
    col: usize,
    exps: [u8; 4],
    num: serde_json::Value,
    den: serde_json::Value,
}

#[derive(Serialize)]
struct JKernel {
    op: &'static str,
    block: String,
    rows: usize,
    cols: usize,
    terms: Vec<JTerm>,
}

fn big_json(v: &num::BigInt) -> serde_json::Value {
    match v.to_i64() {
        Some(i) => serde_json::Value::from(i),
        None => serde_json::Value::from(v.to_string()),
    }
}

/// Machine-readable kernel listing.
pub fn emit_json(p: &PiePair) -> String {
    let mut ks = Vec::new();
    for (name, op) in [("T", &p.t), ("A", &p.a)] {
        for (out, inp, tx, ty, k) in op.terms() {
            let mut terms = Vec::new();
            for i in 0..k.rows {
                for j in 0..k.cols {
                    for (m, c) in &k.get(i, j).terms {
                        let e = m.0;
                        debug_assert!(e[4] == 0 && e[5] == 0);
                        terms.push(JTerm { row: i, col: j, exps: [e[0], e[1], e[2], e[3]], num: big_json(c.numer()), den: big_json(c.denom()) });
                    }
                }
            }
            ks.push(JKernel {
                op: name,
                block: format!("{}<-{}:{}{}", comp_name(out), comp_name(inp), tx.name(), ty.name()),
                rows: k.rows,
                cols: k.cols,
                terms,
            });
        }
    }
    let r = &p.rect;
    let doc = serde_json::json!({
        "domain": [r.a.to_string(), r.b.to_string(), r.c.to_string(), r.d.to_string()],
        "n_ode": p.n_ode,
        "n": p.n,
        "kernels": ks,
    });
    serde_json::to_string_pretty(&doc).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::parse_pde;

    const HEAT: &str = "[domain]\nx = 0 1\ny = 0 1\n[states]\nn2 = 1\n[dynamics]\nA20 = 1\nA02 = 1\n[bc]\n";

    fn sel_rows(cols: &[usize], n: usize) -> String {
        cols.iter()
            .map(|&c| {
                let row: Vec<&str> = (1..=n).map(|j| if j == c { "1" } else { "0" }).collect();
                format!("row = {}\n", row.join(" "))
            })
            .collect()
    }

    fn heat() -> PdeSpec {
        parse_pde(&format!("{HEAT}{}", sel_rows(&[2, 5, 11, 13, 17, 19, 21, 23], 24))).unwrap()
    }

    fn p(s: &[(i64, [u8; 4])]) -> Poly {
        let mut q = Poly::zero();
        for (c, e) in s {
            q.add_term(crate::poly::Mono::from4(*e), Rat::from_integer((*c).into()));
        }
        q
    }

    #[test]
    fn hk_shapes() {
        let hk = build_hk(0, 0, 1, &Rect::unit());
        assert_eq!(hk.h1.b00.rows, 16);
        assert_eq!(hk.h1.b00.get(7, 3), &Poly::one());
        let hk = build_hk(0, 1, 0, &Rect::unit());
        assert_eq!((hk.h1.b00.rows, hk.h1.b00.cols), (4, 1));
    }

    #[test]
    fn heat_closed_form() {
        let s = heat();
        assert!(check_wellposed(&s).well_posed);
        let pie = convert(&s).unwrap();
        let t = pie.t_2d();
        // (x−θ)(y−ν)
        let k = p(&[(1, [1, 1, 0, 0]), (-1, [1, 0, 0, 1]), (-1, [0, 1, 1, 0]), (1, [0, 0, 1, 1])]);
        assert_eq!(t.n[1][1].get(0, 0), &k);
        for (i, j) in [(0, 0), (1, 2), (2, 1), (2, 2)] {
            assert!(t.n[i][j].is_zero(), "T[{i}][{j}]");
        }
        let a = pie.a_2d();
        assert_eq!(a.n[1][0].get(0, 0), &p(&[(1, [1, 0, 0, 0]), (-1, [0, 0, 1, 0])]));
        assert_eq!(a.n[0][1].get(0, 0), &p(&[(1, [0, 1, 0, 0]), (-1, [0, 0, 0, 1])]));
        let nnz: usize = a.n.iter().flatten().filter(|m| !m.is_zero()).count();
        assert_eq!(nnz, 2);
        let dt = d_of_t(&t, &s).unwrap();
        assert_eq!(dt, N2d::identity(1));
    }

    #[test]
    fn zeroed_row_is_not_wellposed() {
        let mut s = heat();
        let mut bm = s.b_matrix.clone().unwrap();
        for j in 0..bm.cols {
            bm.set(3, j, Rat::zero());
        }
        s = PdeSpec::new(s.rect.clone(), (0, 0, 1), s.a.clone(), bm).unwrap();
        let r = check_wellposed(&s);
        assert!(!r.well_posed);
        assert!(r.singular.is_some());
    }
}
