//! PI operators on `R^n0 x L2[x]^n1 x L2[y]^n2 x L2[x,y]^n3`.
//!
//! Every operator is stored the same way: a 4x4 grid of blocks indexed by the
//! component spaces (`R`, `L2[x]`, `L2[y]`, `L2[x,y]`), each block a sum of
//! terms. A term carries one action type per direction and a polynomial
//! matrix kernel written in canonical variables:
//!
//! - `x`, `y`: coordinates of the output point,
//! - `θ`, `ν`: integration variables standing for the input's `x`, `y`.
//!
//! Per direction the action types are
//!
//! | type | input has dir | output has dir | action on `u` |
//! |------|---------------|----------------|---------------|
//! | `C`  | no            | no             | none |
//! | `I`  | yes           | no             | `∫_a^b K(θ) u(θ) dθ` |
//! | `B`  | no            | yes            | `K(x) u` |
//! | `M`  | yes           | yes            | `K(x) u(x)` |
//! | `L`  | yes           | yes            | `∫_a^x K(x,θ) u(θ) dθ` |
//! | `U`  | yes           | yes            | `∫_x^b K(x,θ) u(θ) dθ` |
//!
//! Composition, adjoints and differentiation all work term by term from the
//! tables in [`dir_compose`], which is what lets every composition map between
//! the named parameter spaces (1D, 011, 2D and the mixed ones) share one code path.
//!
//! The typed bundles ([`N1d`], [`N2d`], [`N011`], ...) are thin views on
//! [`PiOp`]. One convention note: in an [`N011`], the `L2[x] -> L2[y]` block is a
//! kernel in `(y, θ)` and the `L2[y] -> L2[x]` block a kernel in `(x, ν)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::poly::{Bound, PolyMat, Rat, Rect, Scalar, Var, VarSet};

/// Action type of a term along one direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    C,
    I,
    B,
    M,
    L,
    U,
}

impl Ty {
    pub fn name(self) -> &'static str {
        match self {
            Ty::C => "C",
            Ty::I => "I",
            Ty::B => "B",
            Ty::M => "0",
            Ty::L => "1",
            Ty::U => "2",
        }
    }
    /// Type of the adjoint term.
    pub fn adjoint(self) -> Ty {
        match self {
            Ty::C => Ty::C,
            Ty::I => Ty::B,
            Ty::B => Ty::I,
            Ty::M => Ty::M,
            Ty::L => Ty::U,
            Ty::U => Ty::L,
        }
    }
    pub fn uses_out(self) -> bool {
        matches!(self, Ty::B | Ty::M | Ty::L | Ty::U)
    }
    pub fn uses_in(self) -> bool {
        matches!(self, Ty::I | Ty::L | Ty::U)
    }
    /// Index 0/1/2 for types acting between present directions.
    pub fn pi_index(self) -> Option<usize> {
        match self {
            Ty::M => Some(0),
            Ty::L => Some(1),
            Ty::U => Some(2),
            _ => None,
        }
    }
    pub fn from_pi_index(i: usize) -> Ty {
        [Ty::M, Ty::L, Ty::U][i]
    }
}

/// Allowed types for a direction given its presence in output and input.
pub fn dir_types(out_has: bool, in_has: bool) -> &'static [Ty] {
    match (out_has, in_has) {
        (false, false) => &[Ty::C],
        (false, true) => &[Ty::I],
        (true, false) => &[Ty::B],
        (true, true) => &[Ty::M, Ty::L, Ty::U],
    }
}

/// Component spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comp {
    R = 0,
    X = 1,
    Y = 2,
    XY = 3,
}

pub const COMPS: [Comp; 4] = [Comp::R, Comp::X, Comp::Y, Comp::XY];

impl Comp {
    pub fn has_x(self) -> bool {
        matches!(self, Comp::X | Comp::XY)
    }
    pub fn has_y(self) -> bool {
        matches!(self, Comp::Y | Comp::XY)
    }
    pub fn idx(self) -> usize {
        self as usize
    }
}

/// Variables a kernel of the given types may use.
pub fn kernel_vars(tx: Ty, ty: Ty) -> VarSet {
    let mut s = VarSet::EMPTY;
    if tx.uses_out() {
        s = s.with(Var::X);
    }
    if tx.uses_in() {
        s = s.with(Var::Th);
    }
    if ty.uses_out() {
        s = s.with(Var::Y);
    }
    if ty.uses_in() {
        s = s.with(Var::Nu);
    }
    s
}

/// Symbolic integration limit inside one direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lim {
    Lo,
    Hi,
    Out,
    In,
}

/// What happens to the middle variable after multiplying two kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirOp {
    /// middle direction absent, nothing to do
    Keep,
    /// middle variable becomes the output variable
    ToOut,
    /// middle variable becomes the input variable
    ToIn,
    /// integrate the middle variable between the limits
    Int(Lim, Lim),
}

/// Composition table for one direction: `A∘B` where `a` acts after `b`.
///
/// Returns the resulting types together with the operation eliminating the
/// middle variable from `A(out, mid) B(mid, in)`.
pub fn dir_compose(a: Ty, b: Ty) -> Vec<(Ty, DirOp)> {
    use DirOp::*;
    use Lim::*;
    use Ty::*;
    match (a, b) {
        // middle space lacks this direction
        (C, C) => vec![(C, Keep)],
        (C, I) => vec![(I, Keep)],
        (B, C) => vec![(B, Keep)],
        (B, I) => vec![(L, Keep), (U, Keep)],
        // middle space has it
        (I, B) => vec![(C, Int(Lo, Hi))],
        (I, M) => vec![(I, ToIn)],
        (I, L) => vec![(I, Int(In, Hi))],
        (I, U) => vec![(I, Int(Lo, In))],
        (M, B) => vec![(B, ToOut)],
        (M, M) => vec![(M, ToOut)],
        (M, L) => vec![(L, ToOut)],
        (M, U) => vec![(U, ToOut)],
        (L, B) => vec![(B, Int(Lo, Out))],
        (L, M) => vec![(L, ToIn)],
        (L, L) => vec![(L, Int(In, Out))],
        (L, U) => vec![(L, Int(Lo, In)), (U, Int(Lo, Out))],
        (U, B) => vec![(B, Int(Out, Hi))],
        (U, M) => vec![(U, ToIn)],
        (U, L) => vec![(L, Int(Out, Hi)), (U, Int(In, Hi))],
        (U, U) => vec![(U, Int(Out, In))],
        _ => panic!("incompatible direction types {a:?}∘{b:?}"),
    }
}

#[derive(Clone, Copy)]
struct DirVars {
    out: Var,
    inp: Var,
    mid: Var,
    lo: usize,
}

const XV: DirVars = DirVars { out: Var::X, inp: Var::Th, mid: Var::Eta, lo: 0 };
const YV: DirVars = DirVars { out: Var::Y, inp: Var::Nu, mid: Var::Mu, lo: 2 };

fn lim_bound(l: Lim, dv: DirVars, bounds: &[Rat; 4]) -> Bound {
    match l {
        Lim::Lo => Bound::Const(bounds[dv.lo].clone()),
        Lim::Hi => Bound::Const(bounds[dv.lo + 1].clone()),
        Lim::Out => Bound::Var(dv.out),
        Lim::In => Bound::Var(dv.inp),
    }
}

fn apply_dirop<F: Scalar>(k: &PolyMat<F>, op: DirOp, dv: DirVars, bounds: &[Rat; 4]) -> PolyMat<F> {
    match op {
        DirOp::Keep => k.clone(),
        DirOp::ToOut => k.subst_var(dv.mid, dv.out),
        DirOp::ToIn => k.subst_var(dv.mid, dv.inp),
        DirOp::Int(lo, hi) => k
            .integrate(dv.mid, &lim_bound(lo, dv, bounds), &lim_bound(hi, dv, bounds))
            .expect("limits never equal the middle variable"),
    }
}

/// One block of an operator: a sum of typed terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<F: Scalar = Rat> {
    pub rows: usize,
    pub cols: usize,
    pub terms: BTreeMap<(Ty, Ty), PolyMat<F>>,
}

impl<F: Scalar> Block<F> {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Block { rows, cols, terms: BTreeMap::new() }
    }
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
    pub fn get(&self, tx: Ty, ty: Ty) -> PolyMat<F> {
        self.terms.get(&(tx, ty)).cloned().unwrap_or_else(|| PolyMat::zeros(self.rows, self.cols))
    }
    fn add_raw(&mut self, key: (Ty, Ty), k: PolyMat<F>) {
        if k.is_zero() || self.rows == 0 || self.cols == 0 {
            return;
        }
        let e = self.terms.entry(key).or_insert_with(|| PolyMat::zeros(k.rows, k.cols));
        e.add_assign(&k);
        if e.is_zero() {
            self.terms.remove(&key);
        }
    }
    pub fn degree(&self) -> u32 {
        self.terms.values().map(|k| k.degree()).max().unwrap_or(0)
    }
}

/// Generic PI operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PiOp<F: Scalar = Rat> {
    pub rows: [usize; 4],
    pub cols: [usize; 4],
    pub rect: Rect,
    blocks: Vec<Block<F>>,
}

impl<F: Scalar> PiOp<F> {
    pub fn zero(rows: [usize; 4], cols: [usize; 4], rect: &Rect) -> Self {
        let mut blocks = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                blocks.push(Block::zero(rows[i], cols[j]));
            }
        }
        PiOp { rows, cols, rect: rect.clone(), blocks }
    }

    /// Identity on the given component dimensions.
    pub fn identity(dims: [usize; 4], rect: &Rect) -> Self {
        let mut op = PiOp::zero(dims, dims, rect);
        for c in COMPS {
            let n = dims[c.idx()];
            let key = diag_key(c);
            op.add_term(c, c, key.0, key.1, PolyMat::identity(n)).unwrap();
        }
        op
    }

    pub fn block(&self, out: Comp, inp: Comp) -> &Block<F> {
        &self.blocks[out.idx() * 4 + inp.idx()]
    }
    fn block_mut(&mut self, out: Comp, inp: Comp) -> &mut Block<F> {
        &mut self.blocks[out.idx() * 4 + inp.idx()]
    }

    /// Kernel of a term (zero matrix if absent).
    pub fn kernel(&self, out: Comp, inp: Comp, tx: Ty, ty: Ty) -> PolyMat<F> {
        self.block(out, inp).get(tx, ty)
    }

    pub fn nrows(&self) -> usize {
        self.rows.iter().sum()
    }
    pub fn ncols(&self) -> usize {
        self.cols.iter().sum()
    }

    /// Add a term, checking its types and kernel variables.
    pub fn add_term(&mut self, out: Comp, inp: Comp, tx: Ty, ty: Ty, k: PolyMat<F>) -> Result<()> {
        if !dir_types(out.has_x(), inp.has_x()).contains(&tx)
            || !dir_types(out.has_y(), inp.has_y()).contains(&ty)
        {
            return Err(Error::Op(format!(
                "term type ({},{}) invalid for block {:?}<-{:?}",
                tx.name(),
                ty.name(),
                out,
                inp
            )));
        }
        let (r, c) = (self.rows[out.idx()], self.cols[inp.idx()]);
        if k.rows != r || k.cols != c {
            return Err(Error::Dim(format!(
                "kernel {}x{} for block {:?}<-{:?} of size {}x{}",
                k.rows, k.cols, out, inp, r, c
            )));
        }
        let allowed = kernel_vars(tx, ty);
        if !k.vars().is_subset(allowed) {
            return Err(Error::Op(format!(
                "kernel uses variables {} but ({},{}) allows only {}",
                k.vars(),
                tx.name(),
                ty.name(),
                allowed
            )));
        }
        self.block_mut(out, inp).add_raw((tx, ty), k);
        Ok(())
    }

    /// Iterate over all nonzero terms as `(out, in, tx, ty, kernel)`.
    pub fn terms(&self) -> impl Iterator<Item = (Comp, Comp, Ty, Ty, &PolyMat<F>)> {
        COMPS.iter().flat_map(move |&o| {
            COMPS.iter().flat_map(move |&i| {
                self.block(o, i).terms.iter().map(move |(&(tx, ty), k)| (o, i, tx, ty, k))
            })
        })
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.is_zero())
    }

    pub fn degree(&self) -> u32 {
        self.blocks.iter().map(|b| b.degree()).max().unwrap_or(0)
    }

    fn check_same(&self, o: &Self) -> Result<()> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(Error::Dim(format!(
                "operator signatures {:?}x{:?} vs {:?}x{:?}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.check_same(o)?;
        let mut r = self.clone();
        for (bo, bi) in r.blocks.iter_mut().zip(&o.blocks) {
            for (key, k) in &bi.terms {
                bo.add_raw(*key, k.clone());
            }
        }
        Ok(r)
    }
    pub fn add(&self, o: &Self) -> Self {
        self.try_add(o).expect("signature mismatch in PiOp::add")
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn neg(&self) -> Self {
        self.map_kernels(|k| k.neg())
    }
    pub fn scale(&self, s: &F) -> Self {
        self.map_kernels(|k| k.scale(s))
    }

    /// Apply a kernel transformation preserving types.
    pub fn map_kernels(&self, f: impl Fn(&PolyMat<F>) -> PolyMat<F>) -> Self {
        let mut r = PiOp::zero(self.rows, self.cols, &self.rect);
        for (rb, b) in r.blocks.iter_mut().zip(&self.blocks) {
            for (key, k) in &b.terms {
                rb.add_raw(*key, f(k));
            }
        }
        r
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dim(format!(
                "cannot compose: inner signatures {:?} vs {:?}",
                self.cols, other.rows
            )));
        }
        let bounds = [
            self.rect.a.clone(),
            self.rect.b.clone(),
            self.rect.c.clone(),
            self.rect.d.clone(),
        ];
        let mut r = PiOp::zero(self.rows, other.cols, &self.rect);
        for o in COMPS {
            for m in COMPS {
                let ba = self.block(o, m);
                if ba.is_zero() {
                    continue;
                }
                for i in COMPS {
                    let bb = other.block(m, i);
                    if bb.is_zero() {
                        continue;
                    }
                    for (&(ax, ay), ka) in &ba.terms {
                        let ka = ka.permute(&[(Var::Th, Var::Eta), (Var::Nu, Var::Mu)]);
                        for (&(bx, by), kb) in &bb.terms {
                            let kb = kb.permute(&[(Var::X, Var::Eta), (Var::Y, Var::Mu)]);
                            let prod = ka.mul(&kb);
                            if prod.is_zero() {
                                continue;
                            }
                            let xs = dir_compose(ax, bx);
                            let ys = dir_compose(ay, by);
                            for (rx, opx) in &xs {
                                let kx = apply_dirop(&prod, *opx, XV, &bounds);
                                for (ry, opy) in &ys {
                                    let k = apply_dirop(&kx, *opy, YV, &bounds);
                                    r.block_mut(o, i).add_raw((*rx, *ry), k);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(r)
    }

    /// Adjoint with respect to the concatenated `R x L2[x] x L2[y] x L2[x,y]` inner product.
    pub fn adjoint(&self) -> Self {
        let mut r = PiOp::zero(self.cols, self.rows, &self.rect);
        for (o, i, tx, ty, k) in self.terms() {
            let mut perm = Vec::new();
            match tx {
                Ty::L | Ty::U => {
                    perm.push((Var::X, Var::Th));
                    perm.push((Var::Th, Var::X));
                }
                Ty::I => perm.push((Var::Th, Var::X)),
                Ty::B => perm.push((Var::X, Var::Th)),
                _ => {}
            }
            match ty {
                Ty::L | Ty::U => {
                    perm.push((Var::Y, Var::Nu));
                    perm.push((Var::Nu, Var::Y));
                }
                Ty::I => perm.push((Var::Nu, Var::Y)),
                Ty::B => perm.push((Var::Y, Var::Nu)),
                _ => {}
            }
            let nk = k.permute(&perm).transpose();
            r.block_mut(i, o).add_raw((tx.adjoint(), ty.adjoint()), nk);
        }
        r
    }

    pub fn is_selfadjoint(&self) -> bool {
        self.rows == self.cols && self.adjoint() == *self
    }

    /// Restrict to a sub-signature by selecting row/column ranges per component.
    pub fn select(&self, rows: [(usize, usize); 4], cols: [(usize, usize); 4]) -> Self {
        let rd = rows.map(|r| r.1);
        let cd = cols.map(|c| c.1);
        let mut r = PiOp::zero(rd, cd, &self.rect);
        for (o, i, tx, ty, k) in self.terms() {
            let (r0, nr) = rows[o.idx()];
            let (c0, nc) = cols[i.idx()];
            r.block_mut(o, i).add_raw((tx, ty), k.submatrix(r0, nr, c0, nc));
        }
        r
    }

    /// Left-multiply by constant matrices acting on each output component.
    pub fn premul(&self, mats: [&PolyMat<F>; 4]) -> Result<Self> {
        let rows = [mats[0].rows, mats[1].rows, mats[2].rows, mats[3].rows];
        let mut r = PiOp::zero(rows, self.cols, &self.rect);
        for (o, i, tx, ty, k) in self.terms() {
            let m = mats[o.idx()];
            if !m.vars().is_empty() {
                return Err(Error::Op("premul expects constant matrices".into()));
            }
            r.block_mut(o, i).add_raw((tx, ty), m.try_mul(k)?);
        }
        Ok(r)
    }

    pub fn map_scalar<G: Scalar>(&self, f: impl Fn(&F) -> G + Copy) -> PiOp<G> {
        let mut r = PiOp::zero(self.rows, self.cols, &self.rect);
        for (o, i, tx, ty, k) in self.terms() {
            let nk = PolyMat { rows: k.rows, cols: k.cols, data: k.data.iter().map(|p| p.map_coeffs(f)).collect() };
            r.block_mut(o, i).add_raw((tx, ty), nk);
        }
        r
    }

    pub fn to_f64(&self) -> PiOp<f64> {
        self.map_scalar(|c| c.to_f64())
    }

    /// Constant matrix embedded as a multiplier with the given row/column splits.
    ///
    /// Nonzero entries outside the diagonal component blocks cannot be written
    /// as a multiplier and are rejected.
    pub fn embed_matrix(m: &PolyMat<F>, rows: [usize; 4], cols: [usize; 4], rect: &Rect) -> Result<Self> {
        if m.rows != rows.iter().sum::<usize>() || m.cols != cols.iter().sum::<usize>() {
            return Err(Error::Dim(format!(
                "matrix {}x{} does not match split {:?}x{:?}",
                m.rows, m.cols, rows, cols
            )));
        }
        let mut op = PiOp::zero(rows, cols, rect);
        let ro = offsets(rows);
        let co = offsets(cols);
        for o in COMPS {
            for i in COMPS {
                let sub = m.submatrix(ro[o.idx()], rows[o.idx()], co[i.idx()], cols[i.idx()]);
                if sub.is_zero() {
                    continue;
                }
                if o != i {
                    return Err(Error::Op(format!(
                        "matrix has nonzero block {:?}<-{:?}; not representable as a multiplier",
                        o, i
                    )));
                }
                let (tx, ty) = diag_key(o);
                op.add_term(o, i, tx, ty, sub)?;
            }
        }
        Ok(op)
    }

    /// Number of stored polynomial terms, a rough size measure.
    pub fn nnz(&self) -> usize {
        self.terms().map(|(_, _, _, _, k)| k.data.iter().map(|p| p.len()).sum::<usize>()).sum()
    }
}

/// Multiplier key of a component's diagonal block.
pub fn diag_key(c: Comp) -> (Ty, Ty) {
    let tx = if c.has_x() { Ty::M } else { Ty::C };
    let ty = if c.has_y() { Ty::M } else { Ty::C };
    (tx, ty)
}

pub fn offsets(d: [usize; 4]) -> [usize; 4] {
    [0, d[0], d[0] + d[1], d[0] + d[1] + d[2]]
}

/// Signature helpers.
pub fn dims_2d(n: usize) -> [usize; 4] {
    [0, 0, 0, n]
}
pub fn dims_011(n0: usize, n1: usize) -> [usize; 4] {
    [n0, n1, n1, 0]
}

/// Applying to polynomial functions: the input becomes an operator from `R^1`.
pub fn function_op<F: Scalar>(comps: [PolyMat<F>; 4], rect: &Rect) -> Result<PiOp<F>> {
    let rows = [comps[0].rows, comps[1].rows, comps[2].rows, comps[3].rows];
    let mut op = PiOp::zero(rows, [1, 0, 0, 0], rect);
    for c in COMPS {
        let k = &comps[c.idx()];
        if k.cols != 1 && k.rows > 0 {
            return Err(Error::Dim("function components must be column vectors".into()));
        }
        let tx = if c.has_x() { Ty::B } else { Ty::C };
        let ty = if c.has_y() { Ty::B } else { Ty::C };
        op.add_term(c, Comp::R, tx, ty, k.clone())?;
    }
    Ok(op)
}

/// Apply an operator to polynomial functions, returning output components.
pub fn apply_poly<F: Scalar>(op: &PiOp<F>, comps: [PolyMat<F>; 4]) -> Result<[PolyMat<F>; 4]> {
    let f = function_op(comps, &op.rect)?;
    let r = op.compose(&f)?;
    Ok(COMPS.map(|c| {
        let tx = if c.has_x() { Ty::B } else { Ty::C };
        let ty = if c.has_y() { Ty::B } else { Ty::C };
        r.kernel(c, Comp::R, tx, ty)
    }))
}

// ---------------------------------------------------------------------------
// Named parameter bundles.

fn zm<F: Scalar>(r: usize, c: usize) -> PolyMat<F> {
    PolyMat::zeros(r, c)
}

/// Kernels of a 1D operator `{N0, N1, N2}` on `L2[x]` (or `L2[y]`, see [`N1d::to_op_y`]).
/// Kernels are in `x` and `(x, θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct N1d<F: Scalar = Rat> {
    pub n: [PolyMat<F>; 3],
}

impl<F: Scalar> N1d<F> {
    pub fn zero(r: usize, c: usize) -> Self {
        N1d { n: [zm(r, c), zm(r, c), zm(r, c)] }
    }
    pub fn identity(n: usize) -> Self {
        N1d { n: [PolyMat::identity(n), zm(n, n), zm(n, n)] }
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.n[0].rows, self.n[0].cols)
    }
    pub fn to_op(&self, rect: &Rect) -> Result<PiOp<F>> {
        let (r, c) = self.dims();
        let mut op = PiOp::zero([0, r, 0, 0], [0, c, 0, 0], rect);
        for (k, t) in self.n.iter().zip([Ty::M, Ty::L, Ty::U]) {
            op.add_term(Comp::X, Comp::X, t, Ty::C, k.clone())?;
        }
        Ok(op)
    }
    /// Same kernels read in `y` and `(y, ν)`, acting on `L2[y]`.
    pub fn to_op_y(&self, rect: &Rect) -> Result<PiOp<F>> {
        let (r, c) = self.dims();
        let mut op = PiOp::zero([0, 0, r, 0], [0, 0, c, 0], rect);
        for (k, t) in self.n.iter().zip([Ty::M, Ty::L, Ty::U]) {
            op.add_term(Comp::Y, Comp::Y, Ty::C, t, to_y(k))?;
        }
        Ok(op)
    }
    pub fn from_op(op: &PiOp<F>) -> Result<Self> {
        only_blocks(op, &[(Comp::X, Comp::X)])?;
        let b = op.block(Comp::X, Comp::X);
        Ok(N1d { n: [Ty::M, Ty::L, Ty::U].map(|t| b.get(t, Ty::C)) })
    }
}

/// Rename the x-direction variables of a kernel to the y-direction ones.
pub fn to_y<F: Scalar>(k: &PolyMat<F>) -> PolyMat<F> {
    k.permute(&[(Var::X, Var::Y), (Var::Th, Var::Nu)])
}
/// Inverse of [`to_y`].
pub fn from_y<F: Scalar>(k: &PolyMat<F>) -> PolyMat<F> {
    k.permute(&[(Var::Y, Var::X), (Var::Nu, Var::Th)])
}

fn only_blocks<F: Scalar>(op: &PiOp<F>, allowed: &[(Comp, Comp)]) -> Result<()> {
    for (o, i, _, _, _) in op.terms() {
        if !allowed.contains(&(o, i)) {
            return Err(Error::Op(format!("unexpected nonzero block {:?}<-{:?}", o, i)));
        }
    }
    Ok(())
}

/// 2D operator with nine kernels `N[i][j]`; `i` is the x-type, `j` the y-type
/// (0 multiplier, 1 lower integral, 2 upper integral).
#[derive(Clone, Debug, PartialEq)]
pub struct N2d<F: Scalar = Rat> {
    pub n: [[PolyMat<F>; 3]; 3],
}

impl<F: Scalar> N2d<F> {
    pub fn zero(r: usize, c: usize) -> Self {
        N2d { n: std::array::from_fn(|_| std::array::from_fn(|_| zm(r, c))) }
    }
    pub fn identity(n: usize) -> Self {
        let mut z = N2d::zero(n, n);
        z.n[0][0] = PolyMat::identity(n);
        z
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.n[0][0].rows, self.n[0][0].cols)
    }
    pub fn to_op(&self, rect: &Rect) -> Result<PiOp<F>> {
        let (r, c) = self.dims();
        let mut op = PiOp::zero(dims_2d(r), dims_2d(c), rect);
        for i in 0..3 {
            for j in 0..3 {
                op.add_term(Comp::XY, Comp::XY, Ty::from_pi_index(i), Ty::from_pi_index(j), self.n[i][j].clone())?;
            }
        }
        Ok(op)
    }
    pub fn from_op(op: &PiOp<F>) -> Result<Self> {
        only_blocks(op, &[(Comp::XY, Comp::XY)])?;
        let b = op.block(Comp::XY, Comp::XY);
        Ok(N2d {
            n: std::array::from_fn(|i| std::array::from_fn(|j| b.get(Ty::from_pi_index(i), Ty::from_pi_index(j)))),
        })
    }
}

/// Operator `L2[x,y] -> L2[x]`: `{D0(x,ν), D1(x,θ,ν), D2(x,θ,ν)}`, integrated over `ν` on `[c,d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct N2dTo1d<F: Scalar = Rat> {
    pub d: [PolyMat<F>; 3],
}

/// Operator `L2[x] -> L2[x,y]`: `{E0(x,y), E1(x,y,θ), E2(x,y,θ)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct N1dTo2d<F: Scalar = Rat> {
    pub e: [PolyMat<F>; 3],
}

/// Operator `L2[x,y] -> R^n0 x L2[x] x L2[y]`.
///
/// `s0(θ,ν)` feeds the scalar rows, `s1` the `L2[x]` rows and `s2` the `L2[y]` rows;
/// `s2` kernels are stored with the y-direction variables, i.e. `{D0(θ,y), D1(θ,y,ν), D2(θ,y,ν)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct N2dTo011<F: Scalar = Rat> {
    pub s0: PolyMat<F>,
    pub s1: N2dTo1d<F>,
    pub s2: N2dTo1d<F>,
}

/// Operator `R^m0 x L2[x] x L2[y] -> L2[x,y]`; `t2` kernels are `{E0(x,y), E1(x,y,ν), E2(x,y,ν)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct N011To2d<F: Scalar = Rat> {
    pub t0: PolyMat<F>,
    pub t1: N1dTo2d<F>,
    pub t2: N1dTo2d<F>,
}

/// 011 operator on `R^m0 x L2[x]^m1 x L2[y]^m1`.
#[derive(Clone, Debug, PartialEq)]
pub struct N011<F: Scalar = Rat> {
    /// `R <- R`, constant
    pub b00: PolyMat<F>,
    /// `R <- L2[x]`, kernel in `θ`
    pub b01: PolyMat<F>,
    /// `R <- L2[y]`, kernel in `ν`
    pub b02: PolyMat<F>,
    /// `L2[x] <- R`, kernel in `x`
    pub b10: PolyMat<F>,
    pub b11: N1d<F>,
    /// `L2[x] <- L2[y]`, kernel in `(x, ν)`
    pub b12: PolyMat<F>,
    /// `L2[y] <- R`, kernel in `y`
    pub b20: PolyMat<F>,
    /// `L2[y] <- L2[x]`, kernel in `(y, θ)`
    pub b21: PolyMat<F>,
    /// kernels in `y` and `(y, ν)`
    pub b22: N1d<F>,
}

/// 0112 operator on `R^m0 x L2[x]^m1 x L2[y]^m1 x L2[x,y]^m2`.
#[derive(Clone, Debug, PartialEq)]
pub struct N0112<F: Scalar = Rat> {
    pub r11: N011<F>,
    pub r12: N2dTo011<F>,
    pub r21: N011To2d<F>,
    pub r22: N2d<F>,
}

impl<F: Scalar> N2dTo1d<F> {
    fn add_to(&self, op: &mut PiOp<F>, out: Comp) -> Result<()> {
        for (k, t) in self.d.iter().zip([Ty::M, Ty::L, Ty::U]) {
            if out == Comp::X {
                op.add_term(Comp::X, Comp::XY, t, Ty::I, k.clone())?;
            } else {
                op.add_term(Comp::Y, Comp::XY, Ty::I, t, k.clone())?;
            }
        }
        Ok(())
    }
    fn read(op: &PiOp<F>, out: Comp) -> Self {
        let b = op.block(out, Comp::XY);
        N2dTo1d {
            d: [Ty::M, Ty::L, Ty::U].map(|t| if out == Comp::X { b.get(t, Ty::I) } else { b.get(Ty::I, t) }),
        }
    }
    pub fn zero(r: usize, c: usize) -> Self {
        N2dTo1d { d: [zm(r, c), zm(r, c), zm(r, c)] }
    }
}

impl<F: Scalar> N1dTo2d<F> {
    fn add_to(&self, op: &mut PiOp<F>, inp: Comp) -> Result<()> {
        for (k, t) in self.e.iter().zip([Ty::M, Ty::L, Ty::U]) {
            if inp == Comp::X {
                op.add_term(Comp::XY, Comp::X, t, Ty::B, k.clone())?;
            } else {
                op.add_term(Comp::XY, Comp::Y, Ty::B, t, k.clone())?;
            }
        }
        Ok(())
    }
    fn read(op: &PiOp<F>, inp: Comp) -> Self {
        let b = op.block(Comp::XY, inp);
        N1dTo2d {
            e: [Ty::M, Ty::L, Ty::U].map(|t| if inp == Comp::X { b.get(t, Ty::B) } else { b.get(Ty::B, t) }),
        }
    }
    pub fn zero(r: usize, c: usize) -> Self {
        N1dTo2d { e: [zm(r, c), zm(r, c), zm(r, c)] }
    }
}

impl<F: Scalar> N011<F> {
    pub fn zero(n0: usize, n1: usize, m0: usize, m1: usize) -> Self {
        N011 {
            b00: zm(n0, m0),
            b01: zm(n0, m1),
            b02: zm(n0, m1),
            b10: zm(n1, m0),
            b11: N1d::zero(n1, m1),
            b12: zm(n1, m1),
            b20: zm(n1, m0),
            b21: zm(n1, m1),
            b22: N1d::zero(n1, m1),
        }
    }
    pub fn identity(n0: usize, n1: usize) -> Self {
        let mut z = N011::zero(n0, n1, n0, n1);
        z.b00 = PolyMat::identity(n0);
        z.b11 = N1d::identity(n1);
        z.b22 = N1d::identity(n1);
        z
    }
    /// `((n0, n1), (m0, m1))`
    pub fn signature(&self) -> ((usize, usize), (usize, usize)) {
        ((self.b00.rows, self.b10.rows), (self.b00.cols, self.b01.cols))
    }
    fn add_to(&self, op: &mut PiOp<F>) -> Result<()> {
        use Comp::*;
        op.add_term(R, R, Ty::C, Ty::C, self.b00.clone())?;
        op.add_term(R, X, Ty::I, Ty::C, self.b01.clone())?;
        op.add_term(R, Y, Ty::C, Ty::I, self.b02.clone())?;
        op.add_term(X, R, Ty::B, Ty::C, self.b10.clone())?;
        for (k, t) in self.b11.n.iter().zip([Ty::M, Ty::L, Ty::U]) {
            op.add_term(X, X, t, Ty::C, k.clone())?;
        }
        op.add_term(X, Y, Ty::B, Ty::I, self.b12.clone())?;
        op.add_term(Y, R, Ty::C, Ty::B, self.b20.clone())?;
        op.add_term(Y, X, Ty::I, Ty::B, self.b21.clone())?;
        for (k, t) in self.b22.n.iter().zip([Ty::M, Ty::L, Ty::U]) {
            op.add_term(Y, Y, Ty::C, t, to_y(k))?;
        }
        Ok(())
    }
    fn read(op: &PiOp<F>) -> Self {
        use Comp::*;
        let x = op.block(X, X);
        let y = op.block(Y, Y);
        N011 {
            b00: op.kernel(R, R, Ty::C, Ty::C),
            b01: op.kernel(R, X, Ty::I, Ty::C),
            b02: op.kernel(R, Y, Ty::C, Ty::I),
            b10: op.kernel(X, R, Ty::B, Ty::C),
            b11: N1d { n: [Ty::M, Ty::L, Ty::U].map(|t| x.get(t, Ty::C)) },
            b12: op.kernel(X, Y, Ty::B, Ty::I),
            b20: op.kernel(Y, R, Ty::C, Ty::B),
            b21: op.kernel(Y, X, Ty::I, Ty::B),
            b22: N1d { n: [Ty::M, Ty::L, Ty::U].map(|t| from_y(&y.get(Ty::C, t))) },
        }
    }
    pub fn to_op(&self, rect: &Rect) -> Result<PiOp<F>> {
        let ((n0, n1), (m0, m1)) = self.signature();
        let mut op = PiOp::zero(dims_011(n0, n1), dims_011(m0, m1), rect);
        self.add_to(&mut op)?;
        Ok(op)
    }
    pub fn from_op(op: &PiOp<F>) -> Result<Self> {
        use Comp::*;
        check_011_dims(op.rows)?;
        check_011_dims(op.cols)?;
        only_blocks(op, &[(R, R), (R, X), (R, Y), (X, R), (X, X), (X, Y), (Y, R), (Y, X), (Y, Y)])?;
        Ok(N011::read(op))
    }
}

fn check_011_dims(d: [usize; 4]) -> Result<()> {
    if d[1] != d[2] {
        return Err(Error::Dim(format!("011 signature needs equal L2[x]/L2[y] sizes, got {:?}", d)));
    }
    Ok(())
}

impl<F: Scalar> N2dTo011<F> {
    pub fn zero(n0: usize, n1: usize, m: usize) -> Self {
        N2dTo011 { s0: zm(n0, m), s1: N2dTo1d::zero(n1, m), s2: N2dTo1d::zero(n1, m) }
    }
    pub fn to_op(&self, rect: &Rect) -> Result<PiOp<F>> {
        let (n0, n1, m) = (self.s0.rows, self.s1.d[0].rows, self.s0.cols);
        let mut op = PiOp::zero(dims_011(n0, n1), dims_2d(m), rect);
        op.add_term(Comp::R, Comp::XY, Ty::I, Ty::I, self.s0.clone())?;
        self.s1.add_to(&mut op, Comp::X)?;
        self.s2.add_to(&mut op, Comp::Y)?;
        Ok(op)
    }
    pub fn from_op(op: &PiOp<F>) -> Result<Self> {
        check_011_dims(op.rows)?;
        only_blocks(op, &[(Comp::R, Comp::XY), (Comp::X, Comp::XY), (Comp::Y, Comp::XY)])?;
        Ok(N2dTo011 {
            s0: op.kernel(Comp::R, Comp::XY, Ty::I, Ty::I),
            s1: N2dTo1d::read(op, Comp::X),
            s2: N2dTo1d::read(op, Comp::Y),
        })
    }
}

impl<F: Scalar> N011To2d<F> {
    pub fn zero(n: usize, m0: usize, m1: usize) -> Self {
        N011To2d { t0: zm(n, m0), t1: N1dTo2d::zero(n, m1), t2: N1dTo2d::zero(n, m1) }
    }
    pub fn to_op(&self, rect: &Rect) -> Result<PiOp<F>> {
        let (n, m0, m1) = (self.t0.rows, self.t0.cols, self.t1.e[0].cols);
        let mut op = PiOp::zero(dims_2d(n), dims_011(m0, m1), rect);
        op.add_term(Comp::XY, Comp::R, Ty::B, Ty::B, self.t0.clone())?;
        self.t1.add_to(&mut op, Comp::X)?;
        self.t2.add_to(&mut op, Comp::Y)?;
        Ok(op)
    }
    pub fn from_op(op: &PiOp<F>) -> Result<Self> {
        check_011_dims(op.cols)?;
        only_blocks(op, &[(Comp::XY, Comp::R), (Comp::XY, Comp::X), (Comp::XY, Comp::Y)])?;
        Ok(N011To2d {
            t0: op.kernel(Comp::XY, Comp::R, Ty::B, Ty::B),
            t1: N1dTo2d::read(op, Comp::X),
            t2: N1dTo2d::read(op, Comp::Y),
        })
    }
}

impl<F: Scalar> N0112<F> {
    pub fn to_op(&self, rect: &Rect) -> Result<PiOp<F>> {
        let ((n0, n1), (m0, m1)) = self.r11.signature();
        let (n2, m2) = self.r22.dims();
        let mut op = PiOp::zero([n0, n1, n1, n2], [m0, m1, m1, m2], rect);
        self.r11.add_to(&mut op)?;
        for (k, o) in [(&self.r12.s0, Comp::R)] {
            op.add_term(o, Comp::XY, Ty::I, Ty::I, k.clone())?;
        }
        self.r12.s1.add_to(&mut op, Comp::X)?;
        self.r12.s2.add_to(&mut op, Comp::Y)?;
        op.add_term(Comp::XY, Comp::R, Ty::B, Ty::B, self.r21.t0.clone())?;
        self.r21.t1.add_to(&mut op, Comp::X)?;
        self.r21.t2.add_to(&mut op, Comp::Y)?;
        for i in 0..3 {
            for j in 0..3 {
                op.add_term(
                    Comp::XY,
                    Comp::XY,
                    Ty::from_pi_index(i),
                    Ty::from_pi_index(j),
                    self.r22.n[i][j].clone(),
                )?;
            }
        }
        Ok(op)
    }
    pub fn from_op(op: &PiOp<F>) -> Result<Self> {
        check_011_dims(op.rows)?;
        check_011_dims(op.cols)?;
        let b = op.block(Comp::XY, Comp::XY);
        Ok(N0112 {
            r11: N011::read(op),
            r12: N2dTo011 {
                s0: op.kernel(Comp::R, Comp::XY, Ty::I, Ty::I),
                s1: N2dTo1d::read(op, Comp::X),
                s2: N2dTo1d::read(op, Comp::Y),
            },
            r21: N011To2d {
                t0: op.kernel(Comp::XY, Comp::R, Ty::B, Ty::B),
                t1: N1dTo2d::read(op, Comp::X),
                t2: N1dTo2d::read(op, Comp::Y),
            },
            r22: N2d {
                n: std::array::from_fn(|i| std::array::from_fn(|j| b.get(Ty::from_pi_index(i), Ty::from_pi_index(j)))),
            },
        })
    }
}

// ---------------------------------------------------------------------------
// The ten composition maps between named spaces. All go through `PiOp::compose`.

fn via<A, B, C>(
    a: &A,
    b: &B,
    rect: &Rect,
    ta: impl Fn(&A, &Rect) -> Result<PiOp>,
    tb: impl Fn(&B, &Rect) -> Result<PiOp>,
    back: impl Fn(&PiOp) -> Result<C>,
) -> Result<C> {
    back(&ta(a, rect)?.compose(&tb(b, rect)?)?)
}

pub fn compose_1d(n: &N1d, m: &N1d, rect: &Rect) -> Result<N1d> {
    via(n, m, rect, N1d::to_op, N1d::to_op, N1d::from_op)
}
pub fn compose_011(b: &N011, d: &N011, rect: &Rect) -> Result<N011> {
    via(b, d, rect, N011::to_op, N011::to_op, N011::from_op)
}
pub fn compose_2d(n: &N2d, m: &N2d, rect: &Rect) -> Result<N2d> {
    via(n, m, rect, N2d::to_op, N2d::to_op, N2d::from_op)
}
pub fn compose_011_with_2dto011(b: &N011, d: &N2dTo011, rect: &Rect) -> Result<N2dTo011> {
    via(b, d, rect, N011::to_op, N2dTo011::to_op, N2dTo011::from_op)
}
pub fn compose_2dto011_with_2d(d: &N2dTo011, n: &N2d, rect: &Rect) -> Result<N2dTo011> {
    via(d, n, rect, N2dTo011::to_op, N2d::to_op, N2dTo011::from_op)
}
pub fn compose_011to2d_with_011(e: &N011To2d, b: &N011, rect: &Rect) -> Result<N011To2d> {
    via(e, b, rect, N011To2d::to_op, N011::to_op, N011To2d::from_op)
}
pub fn compose_2d_with_011to2d(n: &N2d, e: &N011To2d, rect: &Rect) -> Result<N011To2d> {
    via(n, e, rect, N2d::to_op, N011To2d::to_op, N011To2d::from_op)
}
pub fn compose_2dto011_with_011to2d(d: &N2dTo011, e: &N011To2d, rect: &Rect) -> Result<N011> {
    via(d, e, rect, N2dTo011::to_op, N011To2d::to_op, N011::from_op)
}
pub fn compose_011to2d_with_2dto011(e: &N011To2d, d: &N2dTo011, rect: &Rect) -> Result<N2d> {
    via(e, d, rect, N011To2d::to_op, N2dTo011::to_op, N2d::from_op)
}
pub fn compose_0112(b: &N0112, d: &N0112, rect: &Rect) -> Result<N0112> {
    via(b, d, rect, N0112::to_op, N0112::to_op, N0112::from_op)
}

pub fn adjoint_2d(n: &N2d, rect: &Rect) -> Result<N2d> {
    N2d::from_op(&n.to_op(rect)?.adjoint())
}
pub fn adjoint_0112(n: &N0112, rect: &Rect) -> Result<N0112> {
    N0112::from_op(&n.to_op(rect)?.adjoint())
}

/// Constant matrix as a multiplier-only 011 bundle with row split `(n0, n1, n1)`
/// and column split `(m0, m1, m1)`.
pub fn embed_011(m: &PolyMat, n: (usize, usize), mm: (usize, usize), rect: &Rect) -> Result<N011> {
    let op = PiOp::embed_matrix(m, dims_011(n.0, n.1), dims_011(mm.0, mm.1), rect)?;
    N011::from_op(&op)
}

/// Constant matrix as a 2D multiplier.
pub fn embed_2d(m: &PolyMat, rect: &Rect) -> Result<N2d> {
    N2d::from_op(&PiOp::embed_matrix(m, dims_2d(m.rows), dims_2d(m.cols), rect)?)
}

pub fn identity_2d(n: usize) -> N2d {
    N2d::identity(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, Poly};

    fn p(v: Var) -> Poly {
        Poly::var(v)
    }

    #[test]
    fn lower_lower_gives_x_minus_theta() {
        let r = Rect::unit();
        let one = PolyMat::from_consts(1, 1, &[rat(1, 1)]);
        let n = N1d { n: [PolyMat::zeros(1, 1), one.clone(), PolyMat::zeros(1, 1)] };
        let q = compose_1d(&n, &n, &r).unwrap();
        assert!(q.n[0].is_zero() && q.n[2].is_zero());
        assert_eq!(q.n[1].get(0, 0), &p(Var::X).sub(&p(Var::Th)));
    }

    #[test]
    fn identity_is_neutral() {
        let r = Rect::unit();
        let mut m = N2d::zero(1, 1);
        m.n[1][2].set(0, 0, p(Var::X).mul(&p(Var::Nu)));
        m.n[0][1].set(0, 0, p(Var::Y).add(&p(Var::Nu)));
        assert_eq!(compose_2d(&N2d::identity(1), &m, &r).unwrap(), m);
        assert_eq!(compose_2d(&m, &N2d::identity(1), &r).unwrap(), m);
    }

    #[test]
    fn adjoint_is_involution() {
        let r = Rect::unit();
        let mut m = N2d::zero(1, 2);
        m.n[1][0].set(0, 1, p(Var::X).mul(&p(Var::Th)).add(&p(Var::Y)));
        m.n[2][1].set(0, 0, p(Var::Th).mul(&p(Var::Nu)));
        let a = adjoint_2d(&m, &r).unwrap();
        assert_eq!(a.dims(), (2, 1));
        // N̂10(x,y,θ) = N20ᵀ(θ,y,x)
        assert_eq!(a.n[1][2].get(0, 0), &p(Var::X).mul(&p(Var::Y)));
        assert_eq!(adjoint_2d(&a, &r).unwrap(), m);
    }

    #[test]
    fn embed_rejects_offdiagonal() {
        let r = Rect::unit();
        let mut m = PolyMat::zeros(3, 3);
        m.set(0, 0, Poly::one());
        m.set(1, 1, Poly::one());
        let b = embed_011(&m, (1, 1), (1, 1), &r).unwrap();
        assert_eq!(b.b00.get(0, 0), &Poly::one());
        assert_eq!(b.b11.n[0].get(0, 0), &Poly::one());
        m.set(0, 2, Poly::one());
        assert!(embed_011(&m, (1, 1), (1, 1), &r).is_err());
        assert!(embed_011(&PolyMat::zeros(3, 3), (1, 1), (1, 1), &r).unwrap().b00.is_zero());
    }

    #[test]
    fn term_validation() {
        let r = Rect::unit();
        let mut op: PiOp = PiOp::zero(dims_2d(1), dims_2d(1), &r);
        let k = PolyMat::from_fn(1, 1, |_, _| p(Var::Th));
        assert!(op.add_term(Comp::XY, Comp::XY, Ty::M, Ty::M, k.clone()).is_err());
        assert!(op.add_term(Comp::XY, Comp::XY, Ty::L, Ty::M, k.clone()).is_ok());
        assert!(op.add_term(Comp::R, Comp::XY, Ty::L, Ty::M, k).is_err());
    }
}
