//! Positive PI operators `𝒫 = 𝒵* (g P) 𝒵` with `P ⪰ 0`.
//!
//! `𝒵` stacks nine monomial blocks, one per kernel type of a 2D operator:
//! multiplier, x-lower, x-upper, y-lower, y-upper and the four double integrals.
//! When the state carries a finite-dimensional part (ODE coupling), a leading
//! constant block maps `R^{n_ode}` into the stack as well.
//!
//! Decision matrices are symbolic through [`PsdVarHandle`]: an operator that is
//! affine in the entries of one or more Gram matrices is an [`AffineOp`], one
//! concrete operator per upper-triangular entry.

use num::Zero;

use crate::error::{Error, Result};
use crate::op::{kernel_vars, Comp, PiOp, Ty};
use crate::poly::{monomial_basis, Mono, Poly, PolyMat, Rat, Rect, Scalar, Var};

/// Kernel types of the nine blocks of `𝒵`, in order.
pub const Z_TYPES: [(Ty, Ty); 9] = [
    (Ty::M, Ty::M),
    (Ty::L, Ty::M),
    (Ty::U, Ty::M),
    (Ty::M, Ty::L),
    (Ty::M, Ty::U),
    (Ty::L, Ty::L),
    (Ty::L, Ty::U),
    (Ty::U, Ty::L),
    (Ty::U, Ty::U),
];

/// Monomial blocks of `𝒵` for an `n`-vector 2D state (plus `n_ode` scalars).
#[derive(Clone, Debug, PartialEq)]
pub struct PositivityBasis {
    pub d: u32,
    pub n: usize,
    pub n_ode: usize,
    /// monomials of each block; block `i` has `n * monos[i].len()` rows
    pub monos: [Vec<Mono>; 9],
}

impl PositivityBasis {
    /// Full monomial basis of degree `≤ d` in each block's kernel variables.
    pub fn new(n: usize, d: u32) -> Self {
        PositivityBasis::with_ode(0, n, d)
    }
    pub fn with_ode(n_ode: usize, n: usize, d: u32) -> Self {
        PositivityBasis { d, n, n_ode, monos: Z_TYPES.map(|(tx, ty)| monomial_basis(d, kernel_vars(tx, ty))) }
    }
    /// Basis with only the multiplier block.
    pub fn multiplier_only(n: usize, d: u32) -> Self {
        let mut b = PositivityBasis::new(n, d);
        for m in b.monos.iter_mut().skip(1) {
            m.clear();
        }
        b
    }
    /// Drop blocks (and the constant block) that are not kept.
    pub fn pruned(mut self, keep: [bool; 9], keep_ode: bool) -> Self {
        for (m, k) in self.monos.iter_mut().zip(keep) {
            if !k {
                m.clear();
            }
        }
        if !keep_ode {
            self.n_ode = 0;
        }
        self
    }
    pub fn block_rows(&self, i: usize) -> usize {
        self.n * self.monos[i].len()
    }
    /// Total size `Q` of the Gram matrix.
    pub fn q(&self) -> usize {
        self.n_ode + (0..9).map(|i| self.block_rows(i)).sum::<usize>()
    }
    /// Start row of the constant block (always 0) and of each monomial block.
    pub fn offsets(&self) -> [usize; 11] {
        let mut o = [0; 11];
        o[1] = self.n_ode;
        for i in 0..9 {
            o[i + 2] = o[i + 1] + self.block_rows(i);
        }
        o
    }
    /// Index ranges of the Gram sub-blocks: the constant block then `Z₁..Z₉`.
    pub fn ranges(&self) -> [(usize, usize); 10] {
        let o = self.offsets();
        std::array::from_fn(|i| (o[i], o[i + 1]))
    }
    /// Block `i` of `Z` as a `q_i x n` matrix: row `k n + j` is `m_k e_jᵀ`.
    pub fn z_block<F: Scalar>(&self, i: usize) -> PolyMat<F> {
        let n = self.n;
        let ms = &self.monos[i];
        let mut z = PolyMat::zeros(ms.len() * n, n);
        for (k, m) in ms.iter().enumerate() {
            for j in 0..n {
                z.set(k * n + j, j, Poly::monomial(*m, F::one()));
            }
        }
        z
    }
    /// Input signature: `R^{n_ode} x L2[x,y]^n`.
    pub fn input_dims(&self) -> [usize; 4] {
        [self.n_ode, 0, 0, self.n]
    }
    /// `𝒵 : R^{n_ode} x L2[x,y]^n -> L2[x,y]^Q`.
    pub fn z_op<F: Scalar>(&self, rect: &Rect) -> Result<PiOp<F>> {
        let q = self.q();
        let off = self.offsets();
        let mut op = PiOp::zero([0, 0, 0, q], self.input_dims(), rect);
        if self.n_ode > 0 {
            let mut k = PolyMat::zeros(q, self.n_ode);
            k.set_block(0, 0, &PolyMat::identity(self.n_ode));
            op.add_term(Comp::XY, Comp::R, Ty::B, Ty::B, k)?;
        }
        for (i, &(tx, ty)) in Z_TYPES.iter().enumerate() {
            if self.monos[i].is_empty() {
                continue;
            }
            let mut k = PolyMat::zeros(q, self.n);
            k.set_block(off[i + 1], 0, &self.z_block(i));
            op.add_term(Comp::XY, Comp::XY, tx, ty, k)?;
        }
        Ok(op)
    }
    /// Each row of `𝒵` as its own operator into `L2[x,y]^1`.
    pub fn z_rows<F: Scalar>(&self, rect: &Rect) -> Result<Vec<PiOp<F>>> {
        let z = self.z_op::<F>(rect)?;
        let cols = self.input_dims().map(|c| (0, c));
        Ok((0..self.q()).map(|k| z.select([(0, 0), (0, 0), (0, 0), (k, 1)], cols)).collect())
    }
}

/// The weight `(x−a)(b−x)(y−c)(d−y)`, nonnegative on the domain.
pub fn domain_weight<F: Scalar>(rect: &Rect) -> Poly<F> {
    let f = |c: &Rat| Poly::constant(F::from_rat(c));
    let x = Poly::<F>::var(Var::X);
    let y = Poly::<F>::var(Var::Y);
    x.sub(&f(&rect.a)).mul(&f(&rect.b).sub(&x)).mul(&y.sub(&f(&rect.c))).mul(&f(&rect.d).sub(&y))
}

/// Multiplication by a scalar polynomial on `L2[x,y]^n`.
pub fn weight_op<F: Scalar>(g: &Poly<F>, n: usize, rect: &Rect) -> Result<PiOp<F>> {
    let mut op = PiOp::zero([0, 0, 0, n], [0, 0, 0, n], rect);
    op.add_term(Comp::XY, Comp::XY, Ty::M, Ty::M, PolyMat::scalar_identity(n, g))?;
    Ok(op)
}

/// `𝒵* (g P) 𝒵` for a constant symmetric `P`.
pub fn lpi_param_map<F: Scalar>(basis: &PositivityBasis, p: &PolyMat<F>, g: &Poly<F>, rect: &Rect) -> Result<PiOp<F>> {
    let q = basis.q();
    if p.rows != q || p.cols != q {
        return Err(Error::Dim(format!("Gram matrix must be {q}x{q}, got {}x{}", p.rows, p.cols)));
    }
    if !p.vars().is_empty() {
        return Err(Error::Op("Gram matrix must be constant".into()));
    }
    let z = basis.z_op::<F>(rect)?;
    let mut mid = PiOp::zero([0, 0, 0, q], [0, 0, 0, q], rect);
    mid.add_term(Comp::XY, Comp::XY, Ty::M, Ty::M, p.scale_poly(g))?;
    z.adjoint().compose(&mid.compose(&z)?)
}

/// Exact self-adjointness at the kernel level.
pub fn selfadjoint_check<F: Scalar>(op: &PiOp<F>) -> bool {
    op.is_selfadjoint()
}

/// A symbolic `size x size` PSD decision matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdVarHandle {
    pub id: usize,
    pub size: usize,
    /// sub-block ranges `[start, end)`: the constant block then `P₁₁ … P₉₉`'s diagonal blocks
    pub ranges: [(usize, usize); 10],
}

impl PsdVarHandle {
    pub fn for_basis(id: usize, basis: &PositivityBasis) -> Self {
        PsdVarHandle { id, size: basis.q(), ranges: basis.ranges() }
    }
    /// Number of upper-triangular entries.
    pub fn n_vars(&self) -> usize {
        self.size * (self.size + 1) / 2
    }
}

/// Upper-triangular entry `(i ≤ j)` of a handle. An off-diagonal entry stands
/// for the symmetric pair `P_ij = P_ji`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId {
    pub handle: usize,
    pub i: usize,
    pub j: usize,
}

/// `constant + Σ value(v) · op_v`.
#[derive(Clone, Debug)]
pub struct AffineOp {
    pub constant: PiOp,
    pub terms: Vec<(VarId, PiOp)>,
}

impl AffineOp {
    pub fn constant(op: PiOp) -> Self {
        AffineOp { constant: op, terms: Vec::new() }
    }
    pub fn add(mut self, o: AffineOp) -> Self {
        self.constant = self.constant.add(&o.constant);
        self.terms.extend(o.terms);
        self
    }
    /// Evaluate with concrete symmetric matrices, one per handle id.
    pub fn eval(&self, values: &dyn Fn(VarId) -> Rat) -> PiOp {
        let mut r = self.constant.clone();
        for (v, op) in &self.terms {
            let c = values(*v);
            if !Zero::is_zero(&c) {
                r = r.add(&op.scale(&c));
            }
        }
        r
    }
}

/// `z_k* g z_l + z_l* g z_k` (or `z_k* g z_k` on the diagonal).
pub(crate) fn gram_pair(rows: &[PiOp], grows: &[PiOp], k: usize, l: usize) -> Result<PiOp> {
    let a = rows[k].adjoint().compose(&grows[l])?;
    Ok(if k == l { a } else { a.add(&a.adjoint()) })
}

/// `𝒵* (g P) 𝒵` with `P` symbolic.
pub fn lpi_param_map_affine(basis: &PositivityBasis, h: &PsdVarHandle, g: &Poly, rect: &Rect) -> Result<AffineOp> {
    if h.size != basis.q() {
        return Err(Error::Dim(format!("handle of size {} for a basis of size {}", h.size, basis.q())));
    }
    let rows = basis.z_rows::<Rat>(rect)?;
    let gop = weight_op(g, 1, rect)?;
    let grows = rows.iter().map(|r| gop.compose(r)).collect::<Result<Vec<_>>>()?;
    let dims = basis.input_dims();
    let mut terms = Vec::with_capacity(h.n_vars());
    for j in 0..h.size {
        for i in 0..=j {
            terms.push((VarId { handle: h.id, i, j }, gram_pair(&rows, &grows, i, j)?));
        }
    }
    Ok(AffineOp { constant: PiOp::zero(dims, dims, rect), terms })
}

/// `Ω_d`: `𝒵*P₁𝒵 + 𝒵*(g P₂)𝒵` with `g` the domain weight, handles 0 and 1.
pub fn omega_d(n: usize, d: u32, rect: &Rect) -> Result<(AffineOp, [PsdVarHandle; 2])> {
    let basis = PositivityBasis::new(n, d);
    omega_with(&basis, 0, rect)
}

/// `Ω` over a given basis, using handle ids `first` and `first + 1`.
pub fn omega_with(basis: &PositivityBasis, first: usize, rect: &Rect) -> Result<(AffineOp, [PsdVarHandle; 2])> {
    let h1 = PsdVarHandle::for_basis(first, basis);
    let h2 = PsdVarHandle::for_basis(first + 1, basis);
    let a = lpi_param_map_affine(basis, &h1, &Poly::one(), rect)?;
    let b = lpi_param_map_affine(basis, &h2, &domain_weight(rect), rect)?;
    Ok((a.add(b), [h1, h2]))
}

/// Values of a symmetric matrix as a [`VarId`] lookup for [`AffineOp::eval`].
pub fn matrix_values<'a>(mats: &'a [(usize, &'a PolyMat)]) -> impl Fn(VarId) -> Rat + 'a {
    move |v: VarId| {
        mats.iter()
            .find(|(id, _)| *id == v.handle)
            .and_then(|(_, m)| m.get(v.i, v.j).as_const())
            .unwrap_or_else(<Rat as Zero>::zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    #[test]
    fn sizes_match_counting() {
        assert_eq!(PositivityBasis::new(1, 1).q(), 39);
        assert_eq!(PositivityBasis::new(1, 0).q(), 9);
        assert_eq!(PositivityBasis::with_ode(2, 1, 0).q(), 11);
    }

    #[test]
    fn degree_zero_identity() {
        let b = PositivityBasis::new(1, 0);
        let mut p = PolyMat::<Rat>::zeros(9, 9);
        p.set(0, 0, Poly::one());
        let op = lpi_param_map(&b, &p, &Poly::one(), &Rect::unit()).unwrap();
        assert_eq!(op, PiOp::identity([0, 0, 0, 1], &Rect::unit()));
    }

    #[test]
    fn affine_matches_concrete() {
        let rect = Rect::unit();
        let b = PositivityBasis::with_ode(1, 1, 0);
        let (om, hs) = omega_with(&b, 0, &rect).unwrap();
        let q = b.q();
        let p1 = PolyMat::from_fn(q, q, |i, j| Poly::constant(rat((i * j) as i64 + 1, (i + j + 1) as i64)));
        let p2 = PolyMat::from_fn(q, q, |i, j| Poly::constant(rat((i as i64 - j as i64).abs() - 2, 1)));
        let mats = [(hs[0].id, &p1), (hs[1].id, &p2)];
        let vals = matrix_values(&mats);
        let a = om.eval(&vals);
        let c = lpi_param_map(&b, &p1, &Poly::one(), &rect)
            .unwrap()
            .add(&lpi_param_map(&b, &p2, &domain_weight(&rect), &rect).unwrap());
        assert_eq!(a, c);
        assert!(selfadjoint_check(&a));
    }
}
