//! Numerical oracles: quadrature application of PI operators, inner products
//! and finite-difference checks.
//!
//! Nothing here uses the symbolic composition or adjoint rules; operators act
//! on sampled functions by Gauss-Legendre quadrature, with variable limits
//! handled by remapping the nodes to `[a,x]` or `[x,b]` at each output point.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rand::Rng;

use crate::op::{Comp, PiOp, Ty, COMPS};
use crate::poly::{Poly, PolyMat, Rat, Rect, Scalar, NVARS};

pub const DEFAULT_ORDER: usize = 12;

/// Gauss-Legendre rule on `[-1, 1]` and tensorized over a rectangle.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pairs: Vec<(f64, f64)>,
    pub rect: [f64; 4],
}

impl QuadratureGrid {
    pub fn new(order: usize, rect: &Rect) -> Self {
        let gl = GaussLegendre::new(NonZeroUsize::new(order.max(1)).unwrap());
        QuadratureGrid {
            pairs: gl.as_node_weight_pairs().to_vec(),
            rect: [rect.af(), rect.bf(), rect.cf(), rect.df()],
        }
    }
    pub fn order(&self) -> usize {
        self.pairs.len()
    }
    /// Nodes and weights mapped to `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let (m, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        self.pairs.iter().map(|&(t, w)| (m + h * t, h * w)).collect()
    }
    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(lo, hi).iter().map(|&(t, w)| w * f(t)).sum()
    }
}

/// Vector-valued function on `R x [a,b] x [c,d] x [a,b]x[c,d]`.
pub trait Field: Sync {
    fn dims(&self) -> [usize; 4];
    /// Value of component `c` at `(x, y)`; unused coordinates are ignored.
    fn eval(&self, c: Comp, x: f64, y: f64) -> Vec<f64>;
}

/// Polynomial test function: column vectors in `x` (X), `y` (Y) or both (XY).
#[derive(Clone, Debug)]
pub struct PolyField {
    pub comps: [PolyMat<f64>; 4],
}

impl PolyField {
    pub fn from_rat(comps: &[PolyMat; 4]) -> Self {
        PolyField { comps: std::array::from_fn(|i| comps[i].to_f64()) }
    }
}

impl Field for PolyField {
    fn dims(&self) -> [usize; 4] {
        std::array::from_fn(|i| self.comps[i].rows)
    }
    fn eval(&self, c: Comp, x: f64, y: f64) -> Vec<f64> {
        let mut pt = [0.0; NVARS];
        pt[0] = x;
        pt[1] = y;
        self.comps[c.idx()].eval_f64(&pt)
    }
}

/// Operator applied to a field, evaluated lazily by quadrature.
pub struct Applied<'a> {
    op: PiOp<f64>,
    u: &'a dyn Field,
    grid: QuadratureGrid,
}

/// `𝒫[N] f` by quadrature.
pub fn apply_numeric<'a, F: Scalar>(op: &PiOp<F>, f: &'a dyn Field, grid: &QuadratureGrid) -> Applied<'a> {
    assert_eq!(op.cols, f.dims(), "signature mismatch in apply_numeric");
    Applied { op: op.map_scalar(|c| c.to_f64()), u: f, grid: grid.clone() }
}

fn dir_nodes(t: Ty, out: f64, lo: f64, hi: f64, g: &QuadratureGrid) -> Vec<(f64, f64)> {
    match t {
        Ty::C | Ty::B => vec![(0.0, 1.0)],
        Ty::M => vec![(out, 1.0)],
        Ty::I => g.mapped(lo, hi),
        Ty::L => g.mapped(lo, out),
        Ty::U => g.mapped(out, hi),
    }
}

impl Field for Applied<'_> {
    fn dims(&self) -> [usize; 4] {
        self.op.rows
    }
    fn eval(&self, c: Comp, x: f64, y: f64) -> Vec<f64> {
        let [a, b, cc, d] = self.grid.rect;
        let mut out = vec![0.0; self.op.rows[c.idx()]];
        for i in COMPS {
            let blk = self.op.block(c, i);
            for (&(tx, ty), k) in &blk.terms {
                let xs = dir_nodes(tx, x, a, b, &self.grid);
                let ys = dir_nodes(ty, y, cc, d, &self.grid);
                for &(th, wx) in &xs {
                    for &(nu, wy) in &ys {
                        let u = self.u.eval(i, th, nu);
                        let pt = [x, y, th, nu, 0.0, 0.0];
                        let kv = k.eval_f64(&pt);
                        let w = wx * wy;
                        for r in 0..k.rows {
                            let mut s = 0.0;
                            for (j, uj) in u.iter().enumerate() {
                                s += kv[r * k.cols + j] * uj;
                            }
                            out[r] += w * s;
                        }
                    }
                }
            }
        }
        out
    }
}

/// A field tabulated on Chebyshev points and evaluated by barycentric interpolation.
///
/// Exact (up to rounding) for fields that are polynomials of degree `<= n` in
/// each coordinate, which is what a PI operator with polynomial kernels
/// produces from a polynomial input.
pub struct Tabulated {
    dims: [usize; 4],
    xs: Vec<f64>,
    ys: Vec<f64>,
    bw: Vec<f64>,
    r: Vec<f64>,
    xv: Vec<Vec<f64>>,
    yv: Vec<Vec<f64>>,
    xyv: Vec<Vec<f64>>,
}

fn cheb(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..=n)
        .map(|j| 0.5 * (lo + hi) + 0.5 * (hi - lo) * (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect()
}

impl Tabulated {
    pub fn sample(f: &dyn Field, n: usize, rect: &Rect) -> Self {
        let xs = cheb(n, rect.af(), rect.bf());
        let ys = cheb(n, rect.cf(), rect.df());
        let bw = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let dims = f.dims();
        let r = if dims[0] > 0 { f.eval(Comp::R, 0.0, 0.0) } else { vec![] };
        let xv = if dims[1] > 0 { xs.iter().map(|&x| f.eval(Comp::X, x, 0.0)).collect() } else { vec![] };
        let yv = if dims[2] > 0 { ys.iter().map(|&y| f.eval(Comp::Y, 0.0, y)).collect() } else { vec![] };
        let mut xyv = Vec::new();
        if dims[3] > 0 {
            for &x in &xs {
                for &y in &ys {
                    xyv.push(f.eval(Comp::XY, x, y));
                }
            }
        }
        Tabulated { dims, xs, ys, bw, r, xv, yv, xyv }
    }

    /// Barycentric weights of the interpolation at `t`.
    fn lagrange(&self, nodes: &[f64], t: f64) -> Vec<f64> {
        if let Some(k) = nodes.iter().position(|&z| (z - t).abs() < 1e-15 * (1.0 + t.abs())) {
            let mut l = vec![0.0; nodes.len()];
            l[k] = 1.0;
            return l;
        }
        let mut l: Vec<f64> = nodes.iter().zip(&self.bw).map(|(&z, &w)| w / (t - z)).collect();
        let s: f64 = l.iter().sum();
        l.iter_mut().for_each(|v| *v /= s);
        l
    }
}

impl Field for Tabulated {
    fn dims(&self) -> [usize; 4] {
        self.dims
    }
    fn eval(&self, c: Comp, x: f64, y: f64) -> Vec<f64> {
        let n = self.dims[c.idx()];
        let mut out = vec![0.0; n];
        match c {
            Comp::R => out.clone_from(&self.r),
            Comp::X | Comp::Y => {
                let (nodes, vals, t) = if c == Comp::X { (&self.xs, &self.xv, x) } else { (&self.ys, &self.yv, y) };
                for (l, v) in self.lagrange(nodes, t).iter().zip(vals) {
                    for k in 0..n {
                        out[k] += l * v[k];
                    }
                }
            }
            Comp::XY => {
                let lx = self.lagrange(&self.xs, x);
                let ly = self.lagrange(&self.ys, y);
                let m = self.ys.len();
                for (i, a) in lx.iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    for (j, b) in ly.iter().enumerate() {
                        let v = &self.xyv[i * m + j];
                        for k in 0..n {
                            out[k] += a * b * v[k];
                        }
                    }
                }
            }
        }
        out
    }
}

/// `L2` inner product of one component.
pub fn inner_product(f: &dyn Field, g: &dyn Field, c: Comp, grid: &QuadratureGrid) -> f64 {
    let [a, b, cc, d] = grid.rect;
    let dot = |x: f64, y: f64| f.eval(c, x, y).iter().zip(g.eval(c, x, y)).map(|(p, q)| p * q).sum::<f64>();
    match c {
        Comp::R => dot(0.0, 0.0),
        Comp::X => grid.integrate(a, b, |x| dot(x, 0.0)),
        Comp::Y => grid.integrate(cc, d, |y| dot(0.0, y)),
        Comp::XY => grid.integrate(a, b, |x| grid.integrate(cc, d, |y| dot(x, y))),
    }
}

/// Inner product on `R x L2[x] x L2[y] x L2[x,y]`.
pub fn rll_inner_product(f: &dyn Field, g: &dyn Field, grid: &QuadratureGrid) -> f64 {
    COMPS
        .iter()
        .filter(|c| f.dims()[c.idx()] > 0)
        .map(|&c| inner_product(f, g, c, grid))
        .sum()
}

/// Sample points in the interior used for pointwise comparisons.
pub fn probe_points(rect: &Rect, n: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            (
                rect.af() + (rect.bf() - rect.af()) * rng.gen_range(0.05..0.95),
                rect.cf() + (rect.df() - rect.cf()) * rng.gen_range(0.05..0.95),
            )
        })
        .collect()
}

/// Max-norm difference and max-norm of `g` over the probe points and all components.
pub fn field_diff(f: &dyn Field, g: &dyn Field, pts: &[(f64, f64)]) -> (f64, f64) {
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for c in COMPS {
        if f.dims()[c.idx()] == 0 {
            continue;
        }
        for &(x, y) in pts {
            for (p, q) in f.eval(c, x, y).iter().zip(g.eval(c, x, y)) {
                err = err.max((p - q).abs());
                scale = scale.max(q.abs());
            }
        }
    }
    (err, scale)
}

/// Relative error with an absolute floor for tiny reference values.
pub fn rel_err(err: f64, scale: f64) -> f64 {
    err / scale.max(1e-12)
}

/// Fourth-order central difference of `∂x` or `∂y` of `𝒫[N]f` against `𝒫[M]f`.
pub fn fd_derivative_check<F: Scalar>(
    n: &PiOp<F>,
    m: &PiOp<F>,
    dir: crate::calculus::Dir,
    f: &dyn Field,
    grid: &QuadratureGrid,
    pts: &[(f64, f64)],
    h: f64,
) -> f64 {
    let nf = apply_numeric(n, f, grid);
    let mf = apply_numeric(m, f, grid);
    let mut err: f64 = 0.0;
    for c in COMPS {
        let has = if dir == crate::calculus::Dir::X { c.has_x() } else { c.has_y() };
        if n.rows[c.idx()] == 0 || !has {
            continue;
        }
        for &(x, y) in pts {
            let at = |s: f64| {
                if dir == crate::calculus::Dir::X {
                    nf.eval(c, x + s, y)
                } else {
                    nf.eval(c, x, y + s)
                }
            };
            let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            let exact = mf.eval(c, x, y);
            for k in 0..exact.len() {
                let fd = (-p2[k] + 8.0 * p1[k] - 8.0 * m1[k] + m2[k]) / (12.0 * h);
                err = err.max((fd - exact[k]).abs());
            }
        }
    }
    err
}

/// Relative pointwise mismatch between `𝒫[A](𝒫[B]u)` (nested quadrature) and `𝒫[C]u`,
/// where `C` is the claimed composition.
pub fn composition_residual(
    a: &PiOp,
    b: &PiOp,
    c: &PiOp,
    u: &[PolyMat; 4],
    grid: &QuadratureGrid,
    pts: &[(f64, f64)],
) -> f64 {
    let uf = PolyField::from_rat(u);
    let u_deg = u.iter().map(|m| m.degree()).max().unwrap_or(0);
    let bu = apply_numeric(b, &uf, grid);
    let tab = Tabulated::sample(&bu, output_degree(b, u_deg), &a.rect);
    let lhs = apply_numeric(a, &tab, grid);
    let rhs = apply_numeric(c, &uf, grid);
    let (err, scale) = field_diff(&lhs, &rhs, pts);
    rel_err(err, scale)
}

/// Relative mismatch of `⟨v, 𝒫[A]u⟩` and `⟨𝒫[Â]v, u⟩` for a claimed adjoint `Â`.
pub fn adjoint_residual(a: &PiOp, ahat: &PiOp, u: &[PolyMat; 4], v: &[PolyMat; 4], grid: &QuadratureGrid) -> f64 {
    let uf = PolyField::from_rat(u);
    let vf = PolyField::from_rat(v);
    let au = apply_numeric(a, &uf, grid);
    let av = apply_numeric(ahat, &vf, grid);
    let l = rll_inner_product(&vf, &au, grid);
    let r = rll_inner_product(&av, &uf, grid);
    (l - r).abs() / l.abs().max(r.abs()).max(1e-12)
}

// ---------------------------------------------------------------------------
// Random instances for oracle tests.

/// Random rational in `[-1, 1]` with denominator at most 8.
pub fn random_rat(rng: &mut impl Rng) -> Rat {
    let d = rng.gen_range(1..=8i64);
    crate::poly::rat(rng.gen_range(-d..=d), d)
}

/// Random polynomial of total degree `<= deg` in the given variables.
pub fn random_poly(rng: &mut impl Rng, vars: crate::poly::VarSet, deg: u32) -> Poly {
    let mut p = Poly::zero();
    for m in crate::poly::monomial_basis(deg, vars) {
        if rng.gen_bool(0.6) {
            p.add_term(m, random_rat(rng));
        }
    }
    p
}

pub fn random_polymat(rng: &mut impl Rng, rows: usize, cols: usize, vars: crate::poly::VarSet, deg: u32) -> PolyMat {
    let mut m = PolyMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, random_poly(rng, vars, deg));
        }
    }
    m
}

/// Random operator with every admissible term populated on the given signature.
pub fn random_op(rng: &mut impl Rng, rows: [usize; 4], cols: [usize; 4], rect: &Rect, deg: u32) -> PiOp {
    let mut op = PiOp::zero(rows, cols, rect);
    for o in COMPS {
        for i in COMPS {
            if rows[o.idx()] == 0 || cols[i.idx()] == 0 {
                continue;
            }
            for &tx in crate::op::dir_types(o.has_x(), i.has_x()) {
                for &ty in crate::op::dir_types(o.has_y(), i.has_y()) {
                    let k = random_polymat(rng, rows[o.idx()], cols[i.idx()], crate::op::kernel_vars(tx, ty), deg);
                    op.add_term(o, i, tx, ty, k).unwrap();
                }
            }
        }
    }
    op
}

/// Random polynomial test function on the given signature.
pub fn random_field(rng: &mut impl Rng, dims: [usize; 4], deg: u32) -> [PolyMat; 4] {
    use crate::poly::{Var, VarSet};
    let vs = [VarSet::EMPTY, VarSet::of(&[Var::X]), VarSet::of(&[Var::Y]), VarSet::of(&[Var::X, Var::Y])];
    std::array::from_fn(|i| random_polymat(rng, dims[i], 1, vs[i], deg))
}

/// Degree bound per coordinate for interpolating `𝒫[N] u`.
pub fn output_degree(op: &PiOp, u_deg: u32) -> usize {
    (op.degree() + u_deg + 2) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op::N2d;
    use crate::poly::Var;

    #[test]
    fn inner_products() {
        let r = Rect::unit();
        let g = QuadratureGrid::new(DEFAULT_ORDER, &r);
        let one = PolyField { comps: [PolyMat::zeros(0, 1), PolyMat::zeros(0, 1), PolyMat::zeros(0, 1), PolyMat::identity(1)] };
        assert!((inner_product(&one, &one, Comp::XY, &g) - 1.0).abs() < 1e-14);
        let mut xf = one.clone();
        xf.comps[3].set(0, 0, Poly::var(Var::X));
        let mut yf = one.clone();
        yf.comps[3].set(0, 0, Poly::var(Var::Y));
        assert!((rll_inner_product(&xf, &yf, &g) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn heat_t_on_constant() {
        // ∫_0^x∫_0^y (x-θ)(y-ν) 4 dν dθ = x²y²
        let r = Rect::unit();
        let g = QuadratureGrid::new(DEFAULT_ORDER, &r);
        let mut t: N2d = N2d::zero(1, 1);
        t.n[1][1].set(0, 0, Poly::var(Var::X).sub(&Poly::var(Var::Th)).mul(&Poly::var(Var::Y).sub(&Poly::var(Var::Nu))));
        let op = t.to_op(&r).unwrap();
        let u = PolyField {
            comps: [PolyMat::zeros(0, 1), PolyMat::zeros(0, 1), PolyMat::zeros(0, 1), PolyMat::from_consts(1, 1, &[4.0])],
        };
        let v = apply_numeric(&op, &u, &g);
        for &(x, y) in &[(0.3, 0.7), (0.9, 0.1)] {
            assert!((v.eval(Comp::XY, x, y)[0] - x * x * y * y).abs() < 1e-12);
        }
        let tab = Tabulated::sample(&v, 6, &r);
        assert!((tab.eval(Comp::XY, 0.4, 0.55)[0] - 0.16 * 0.55 * 0.55).abs() < 1e-12);
    }
}
