//! Differentiation of PI operators and the closed-form inverse of separable 011 operators.

use num::One;

use crate::error::{Error, Result};
use crate::op::{Comp, N011, N1d, N2d, PiOp, Ty};
use crate::poly::{Mono, Poly, PolyMat, Rat, Rect, Scalar, Var};
use crate::ratmat::RatMat;

/// Spatial direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    X,
    Y,
}

/// `∂x` (or `∂y`) applied to the output of `op`.
///
/// Every output component carrying the direction is differentiated; components
/// without it must be empty. Multiplier terms in the direction must vanish,
/// since their derivative is not a PI operator.
pub fn diff_op<F: Scalar>(op: &PiOp<F>, dir: Dir) -> Result<PiOp<F>> {
    let (out_v, in_v) = match dir {
        Dir::X => (Var::X, Var::Th),
        Dir::Y => (Var::Y, Var::Nu),
    };
    let has = |c: Comp| if dir == Dir::X { c.has_x() } else { c.has_y() };
    let mut r = PiOp::zero(op.rows, op.cols, &op.rect);
    for (o, i, tx, ty, k) in op.terms() {
        if !has(o) {
            return Err(Error::Op(format!("cannot differentiate {:?} rows along {:?}", o, dir)));
        }
        let t = if dir == Dir::X { tx } else { ty };
        let with = |t2: Ty| if dir == Dir::X { (t2, ty) } else { (tx, t2) };
        match t {
            Ty::B => {
                let (a, b) = with(Ty::B);
                r.add_term(o, i, a, b, k.diff(out_v))?;
            }
            Ty::M => {
                return Err(Error::Op(format!(
                    "nonzero multiplier along {:?} in block {:?}<-{:?}: derivative is not a PI operator",
                    dir, o, i
                )))
            }
            Ty::L | Ty::U => {
                let trace = k.subst_var(in_v, out_v);
                let trace = if t == Ty::L { trace } else { trace.neg() };
                let (a, b) = with(Ty::M);
                r.add_term(o, i, a, b, trace)?;
                let (a, b) = with(t);
                r.add_term(o, i, a, b, k.diff(out_v))?;
            }
            Ty::C | Ty::I => unreachable!("output has the direction"),
        }
    }
    Ok(r)
}

/// `∂x^i ∂y^j` applied to the output, x derivatives first.
pub fn diff_power_op<F: Scalar>(op: &PiOp<F>, i: usize, j: usize) -> Result<PiOp<F>> {
    let mut r = op.clone();
    for s in 0..i {
        r = diff_op(&r, Dir::X).map_err(|e| e.at(format!("d/dx step {}", s + 1)))?;
    }
    for s in 0..j {
        r = diff_op(&r, Dir::Y).map_err(|e| e.at(format!("d/dy step {}", s + 1)))?;
    }
    Ok(r)
}

pub fn diff_x(n: &N2d, rect: &Rect) -> Result<N2d> {
    N2d::from_op(&diff_op(&n.to_op(rect)?, Dir::X)?)
}
pub fn diff_y(n: &N2d, rect: &Rect) -> Result<N2d> {
    N2d::from_op(&diff_op(&n.to_op(rect)?, Dir::Y)?)
}
pub fn diff_power(n: &N2d, i: usize, j: usize, rect: &Rect) -> Result<N2d> {
    N2d::from_op(&diff_power_op(&n.to_op(rect)?, i, j)?)
}

// ---------------------------------------------------------------------------
// Separable 011 operators.

/// A 011 operator with its kernels written as `Zᵀ(x) Γ Z(θ)`, `H Z(x)`, `Zᵀ(x) H`
/// for the monomial basis `Z(x) = [I; x I; ...; x^p I]`.
#[derive(Clone, Debug)]
pub struct SeparableN011 {
    pub q: N011,
    pub n0: usize,
    pub n1: usize,
    /// highest power in the basis
    pub p: usize,
    pub q00: RatMat,
    pub qxx0: RatMat,
    pub qyy0: RatMat,
    pub h0x: RatMat,
    pub h0y: RatMat,
    pub hx0: RatMat,
    pub hy0: RatMat,
    pub gxx: RatMat,
    pub gxy: RatMat,
    pub gyx: RatMat,
    pub gyy: RatMat,
}

impl SeparableN011 {
    pub fn qdim(&self) -> usize {
        (self.p + 1) * self.n1
    }
    /// Rebuild the operator from the factorization.
    pub fn reassemble(&self) -> N011 {
        assemble(
            self.n1,
            self.p,
            &Parts {
                q00: self.q00.clone(),
                qxx0: self.qxx0.clone(),
                qyy0: self.qyy0.clone(),
                lx0: self.qxx0.clone(),
                ly0: self.qyy0.clone(),
                h0x: self.h0x.clone(),
                h0y: self.h0y.clone(),
                hx0: self.hx0.clone(),
                hy0: self.hy0.clone(),
                gxx: self.gxx.clone(),
                gxy: self.gxy.clone(),
                gyx: self.gyx.clone(),
                gyy: self.gyy.clone(),
            },
            true,
        )
    }
}

/// `Z(v)`: `q x n1` with `v^k I` in block row `k`.
pub fn z_basis(v: Var, p: usize, n1: usize) -> PolyMat {
    let mut z = PolyMat::zeros((p + 1) * n1, n1);
    for k in 0..=p {
        for i in 0..n1 {
            z.set(k * n1 + i, i, Poly::monomial(Mono::var(v, k as u8), <Rat as One>::one()));
        }
    }
    z
}

fn coeff_of(k: &PolyMat, m: &Mono) -> RatMat {
    RatMat::from_fn(k.rows, k.cols, |i, j| k.get(i, j).coeff(m))
}

fn mono2(u: Option<(Var, usize)>, v: Option<(Var, usize)>) -> Mono {
    let mut m = Mono::ONE;
    for (var, e) in [u, v].into_iter().flatten() {
        m.0[var.idx()] += e as u8;
    }
    m
}

/// Check that every monomial of `k` is captured by exponents `<= p` in `vars`.
fn check_covered(k: &PolyMat, vars: &[Var], p: usize, name: &str) -> Result<()> {
    for e in &k.data {
        for m in e.terms.keys() {
            for (idx, &ex) in m.0.iter().enumerate() {
                let var = crate::poly::ALL_VARS[idx];
                if ex > 0 && (!vars.contains(&var) || ex as usize > p) {
                    return Err(Error::Op(format!("kernel {name} has monomial outside the separable basis")));
                }
            }
        }
    }
    Ok(())
}

/// Factor a 011 operator through the monomial basis.
///
/// Requires constant `Q00`, `Q⁰xx`, `Q⁰yy` and equal lower/upper kernels in both 1D blocks.
pub fn decompose_separable(q: &N011) -> Result<SeparableN011> {
    let ((n0, n1), (m0, m1)) = q.signature();
    if n0 != m0 || n1 != m1 {
        return Err(Error::Dim(format!("separable inverse needs a square 011 operator, got ({n0},{n1})x({m0},{m1})")));
    }
    let q00 = RatMat::from_polymat(&q.b00).ok_or_else(|| Error::Op("Q00 must be constant".into()))?;
    let qxx0 = RatMat::from_polymat(&q.b11.n[0])
        .ok_or_else(|| Error::Unsupported("non-constant diagonal multiplier Q0xx".into()))?;
    let qyy0 = RatMat::from_polymat(&q.b22.n[0])
        .ok_or_else(|| Error::Unsupported("non-constant diagonal multiplier Q0yy".into()))?;
    if q.b11.n[1] != q.b11.n[2] || q.b22.n[1] != q.b22.n[2] {
        return Err(Error::Op("1D blocks must have equal lower and upper kernels".into()));
    }
    let (kxx, kyy) = (&q.b11.n[1], &q.b22.n[1]);
    let p = [&q.b01, &q.b02, &q.b10, &q.b20, kxx, &q.b12, &q.b21, kyy]
        .iter()
        .flat_map(|k| k.data.iter())
        .flat_map(|e| e.terms.keys())
        .flat_map(|m| m.0.iter().copied())
        .max()
        .unwrap_or(0) as usize;
    use Var::*;
    check_covered(&q.b01, &[Th], p, "Q0x")?;
    check_covered(&q.b02, &[Nu], p, "Q0y")?;
    check_covered(&q.b10, &[X], p, "Qx0")?;
    check_covered(&q.b20, &[Y], p, "Qy0")?;
    check_covered(kxx, &[X, Th], p, "Q1xx")?;
    check_covered(&q.b12, &[X, Nu], p, "Qxy")?;
    check_covered(&q.b21, &[Y, Th], p, "Qyx")?;
    check_covered(kyy, &[X, Th], p, "Q1yy")?;
    let qd = (p + 1) * n1;
    let row_h = |k: &PolyMat, v: Var| {
        let mut h = RatMat::zeros(n0, qd);
        for e in 0..=p {
            h.set_block(0, e * n1, &coeff_of(k, &mono2(Some((v, e)), None)));
        }
        h
    };
    let col_h = |k: &PolyMat, v: Var| {
        let mut h = RatMat::zeros(qd, n0);
        for e in 0..=p {
            h.set_block(e * n1, 0, &coeff_of(k, &mono2(Some((v, e)), None)));
        }
        h
    };
    let gam = |k: &PolyMat, u: Var, v: Var| {
        let mut g = RatMat::zeros(qd, qd);
        for i in 0..=p {
            for j in 0..=p {
                g.set_block(i * n1, j * n1, &coeff_of(k, &mono2(Some((u, i)), Some((v, j)))));
            }
        }
        g
    };
    let s = SeparableN011 {
        q: q.clone(),
        n0,
        n1,
        p,
        q00,
        qxx0,
        qyy0,
        h0x: row_h(&q.b01, Th),
        h0y: row_h(&q.b02, Nu),
        hx0: col_h(&q.b10, X),
        hy0: col_h(&q.b20, Y),
        gxx: gam(kxx, X, Th),
        gxy: gam(&q.b12, X, Nu),
        gyx: gam(&q.b21, Y, Th),
        gyy: gam(kyy, X, Th),
    };
    debug_assert_eq!(s.reassemble(), *q);
    Ok(s)
}

struct Parts {
    q00: RatMat,
    qxx0: RatMat,
    qyy0: RatMat,
    /// multipliers applied to the basis: `Ẑ(x) = Z(x) lx0`
    lx0: RatMat,
    ly0: RatMat,
    h0x: RatMat,
    h0y: RatMat,
    hx0: RatMat,
    hy0: RatMat,
    gxx: RatMat,
    gxy: RatMat,
    gyx: RatMat,
    gyy: RatMat,
}

fn assemble(n1: usize, p: usize, pt: &Parts, original: bool) -> N011 {
    use Var::*;
    let pm = |m: &RatMat| m.to_polymat();
    // Ẑ0(v) = Z(v) L, Ẑ0ᵀ(v) = Lᵀ Zᵀ(v); for the original operator L = I.
    let (lx, ly) = if original {
        (RatMat::identity(n1), RatMat::identity(n1))
    } else {
        (pt.lx0.clone(), pt.ly0.clone())
    };
    let zr = |v: Var, l: &RatMat| z_basis(v, p, n1).mul(&pm(l));
    let zl = |v: Var, l: &RatMat| pm(&l.transpose()).mul(&z_basis(v, p, n1).transpose());
    // Ẑ_{x0}ᵀ uses the transpose of the multiplier, i.e. Q̂⁰ itself.
    let lxt = lx.transpose();
    let lyt = ly.transpose();
    let k1x = zl(X, &lxt).mul(&pm(&pt.gxx)).mul(&zr(Th, &lx));
    let k1y = zl(X, &lyt).mul(&pm(&pt.gyy)).mul(&zr(Th, &ly));
    N011 {
        b00: pm(&pt.q00),
        b01: pm(&pt.h0x).mul(&zr(Th, &lx)),
        b02: pm(&pt.h0y).mul(&zr(Nu, &ly)),
        b10: zl(X, &lxt).mul(&pm(&pt.hx0)),
        b11: N1d { n: [pm(&pt.qxx0), k1x.clone(), k1x] },
        b12: zl(X, &lxt).mul(&pm(&pt.gxy)).mul(&zr(Nu, &ly)),
        b20: zl(Y, &lyt).mul(&pm(&pt.hy0)),
        b21: zl(Y, &lyt).mul(&pm(&pt.gyx)).mul(&zr(Th, &lx)),
        b22: N1d { n: [pm(&pt.qyy0), k1y.clone(), k1y] },
    }
}

/// `∫ Z(v) M Zᵀ(v) dv` over `[lo, hi]`.
fn gram_int(m: &RatMat, p: usize, n1: usize, lo: &Rat, hi: &Rat) -> RatMat {
    let qd = (p + 1) * n1;
    let mut k = RatMat::zeros(qd, qd);
    for i in 0..=p {
        for j in 0..=p {
            let e = (i + j + 1) as i32;
            let w = (num::pow::Pow::pow(hi, e) - num::pow::Pow::pow(lo, e)) / Rat::from_integer(e.into());
            k.set_block(i * n1, j * n1, &m.scale(&w));
        }
    }
    k
}

/// Closed-form inverse of a separable 011 operator.
///
/// The result is checked by composing with the input in both orders; anything
/// but the exact identity is reported as an error.
pub fn invert_011(s: &SeparableN011, rect: &Rect) -> Result<N011> {
    let (n0, n1, p) = (s.n0, s.n1, s.p);
    let qd = s.qdim();
    let iq = RatMat::identity(qd);
    let q00i = s.q00.inverse_named("Q00")?;
    let qx = s.qxx0.inverse_named("Q0xx")?;
    let qy = s.qyy0.inverse_named("Q0yy")?;
    let kxx = gram_int(&qx, p, n1, &rect.a, &rect.b);
    let kyy = gram_int(&qy, p, n1, &rect.c, &rect.d);
    let pxx = s.gxx.sub(&s.hx0.mul(&q00i).mul(&s.h0x));
    let pxy = s.gxy.sub(&s.hx0.mul(&q00i).mul(&s.h0y));
    let pyx = s.gyx.sub(&s.hy0.mul(&q00i).mul(&s.h0x));
    let pyy = s.gyy.sub(&s.hy0.mul(&q00i).mul(&s.h0y));
    let sx = iq.add(&kxx.mul(&pxx));
    let sy = iq.add(&kyy.mul(&pyy));
    let sxi = sx.inverse_named("Sigma_x")?;
    let syi = sy.inverse_named("Sigma_y")?;
    let exy = sxi.mul(&kxx).mul(&pxy);
    let eyx = syi.mul(&kyy).mul(&pyx);
    let fx = sx.sub(&kxx.mul(&pxy).mul(&eyx)).inverse_named("Sigma_x - Kxx Pi_xy E_yx")?;
    let fy = sy.sub(&kyy.mul(&pyx).mul(&exy)).inverse_named("Sigma_y - Kyy Pi_yx E_xy")?;
    let gyx = pyx.sub(&pyy.mul(&eyx)).mul(&fx).neg();
    let gxy = pxy.sub(&pxx.mul(&exy)).mul(&fy).neg();
    let gyy = pyy.add(&gyx.mul(&kxx).mul(&pxy)).mul(&syi).neg();
    let gxx = pxx.add(&gxy.mul(&kyy).mul(&pyx)).mul(&sxi).neg();
    let hy0 = s
        .hy0
        .add(&gyy.mul(&kyy).mul(&s.hy0))
        .add(&gyx.mul(&kxx).mul(&s.hx0))
        .mul(&q00i)
        .neg();
    let hx0 = s
        .hx0
        .add(&gxx.mul(&kxx).mul(&s.hx0))
        .add(&gxy.mul(&kyy).mul(&s.hy0))
        .mul(&q00i)
        .neg();
    let h0y = q00i.mul(&s.h0y).sub(&q00i.mul(&s.h0x).mul(&exy)).mul(&fy).neg();
    let h0x = q00i.mul(&s.h0x).add(&h0y.mul(&kyy).mul(&pyx)).mul(&sxi).neg();
    let q00h = RatMat::identity(n0)
        .sub(&h0x.mul(&kxx).mul(&s.hx0))
        .sub(&h0y.mul(&kyy).mul(&s.hy0))
        .mul(&q00i);
    let inv = assemble(
        n1,
        p,
        &Parts {
            q00: q00h,
            qxx0: qx.clone(),
            qyy0: qy.clone(),
            lx0: qx,
            ly0: qy,
            h0x,
            h0y,
            hx0,
            hy0,
            gxx,
            gxy,
            gyx,
            gyy,
        },
        false,
    );
    let id = N011::identity(n0, n1);
    let left = crate::op::compose_011(&inv, &s.q, rect)?;
    let right = crate::op::compose_011(&s.q, &inv, rect)?;
    if left != id || right != id {
        return Err(Error::Singular("closed-form inverse failed the identity check".into()));
    }
    Ok(inv)
}

/// Decompose and invert in one step.
pub fn inverse_011(q: &N011, rect: &Rect) -> Result<N011> {
    invert_011(&decompose_separable(q)?, rect)
}

/// True if no output row of `op` depends on a multiplier along `dir`.
pub fn multiplier_free<F: Scalar>(op: &PiOp<F>, dir: Dir) -> bool {
    op.terms().all(|(_, _, tx, ty, _)| if dir == Dir::X { tx != Ty::M } else { ty != Ty::M })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    fn pv(v: Var) -> Poly {
        Poly::var(v)
    }

    #[test]
    fn leibniz_on_lower_kernel() {
        let r = Rect::unit();
        let mut n = N2d::zero(1, 1);
        n.n[1][0].set(0, 0, pv(Var::X).sub(&pv(Var::Th)));
        let m = diff_x(&n, &r).unwrap();
        assert!(m.n[0][0].is_zero());
        assert_eq!(m.n[1][0].get(0, 0), &Poly::one());
        assert!(diff_x(&N2d::zero(2, 2), &r).unwrap() == N2d::zero(2, 2));
        assert!(diff_x(&N2d::identity(1), &r).is_err());
    }

    #[test]
    fn mixed_derivatives_commute() {
        let r = Rect::unit();
        let mut n = N2d::zero(1, 1);
        n.n[1][1].set(0, 0, pv(Var::X).mul(&pv(Var::Nu)).add(&pv(Var::Th).mul(&pv(Var::Y))));
        n.n[2][1].set(0, 0, pv(Var::X).mul(&pv(Var::X)).mul(&pv(Var::Y)));
        n.n[1][2].set(0, 0, pv(Var::Th).sub(&pv(Var::Nu)));
        let a = diff_y(&diff_x(&n, &r).unwrap(), &r);
        let b = diff_x(&diff_y(&n, &r).unwrap(), &r);
        // both sides may hit a multiplier; when they don't they agree
        if let (Ok(a), Ok(b)) = (a, b) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn identity_inverts_to_identity() {
        let r = Rect::unit();
        let id = N011::identity(2, 1);
        assert_eq!(inverse_011(&id, &r).unwrap(), id);
    }

    #[test]
    fn perturbed_identity_inverse() {
        let r = Rect::new(rat(0, 1), rat(1, 1), rat(-1, 1), rat(2, 1)).unwrap();
        let mut q = N011::identity(1, 1);
        let c = |v: i64| PolyMat::from_consts(1, 1, &[rat(v, 10)]);
        q.b01 = PolyMat::from_fn(1, 1, |_, _| pv(Var::Th).scale(&rat(1, 10)));
        q.b10 = c(1);
        q.b12 = PolyMat::from_fn(1, 1, |_, _| pv(Var::X).mul(&pv(Var::Nu)).scale(&rat(-1, 10)));
        q.b21 = c(2);
        q.b11.n[1] = c(3);
        q.b11.n[2] = c(3);
        q.b22.n[1] = PolyMat::from_fn(1, 1, |_, _| pv(Var::X).scale(&rat(1, 10)));
        q.b22.n[2] = q.b22.n[1].clone();
        q.b00 = PolyMat::from_consts(1, 1, &[rat(2, 1)]);
        let s = decompose_separable(&q).unwrap();
        assert_eq!(s.reassemble(), q);
        invert_011(&s, &r).unwrap();
    }

    #[test]
    fn singular_reports_factor() {
        let r = Rect::unit();
        let mut q = N011::identity(1, 1);
        q.b00 = PolyMat::zeros(1, 1);
        let e = inverse_011(&q, &r).unwrap_err();
        assert!(e.to_string().contains("Q00"), "{e}");
    }
}
