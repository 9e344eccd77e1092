//! Stability LPI: find `𝒫 ∈ Ω_d + εI` with `𝒜*𝒫𝒯 + 𝒯*𝒫𝒜 ≤ −δ𝒯*𝒯`.
//!
//! The negativity condition is imposed as `D = −δ𝒯*𝒯 − 𝒜*𝒫𝒯 − 𝒯*𝒫𝒜 ∈ Ω_{d'}`
//! with a second pair of Gram matrices. Matching every polynomial coefficient
//! of every kernel of `D` against the slack gives the SDP equality
//! constraints. Both sides are self-adjoint, so only one kernel of each
//! adjoint pair is matched.
//!
//! A solver answer is never trusted on its own: [`verify_certificate`]
//! rebuilds `𝒫`, `D` and the slack in exact arithmetic from the rounded
//! solution and checks them.

use std::collections::{BTreeMap, BTreeSet};

use faer::Mat;
use num::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::convert::{convert, PiePair};
use crate::error::{Error, Result};
use crate::op::{Comp, PiOp, Ty};
use crate::pde::{instantiate, parse_pde};
use crate::poly::{f64_to_rat, rat_to_f64, Bound, Mono, Poly, PolyMat, Rat, Rect, Scalar, Var};
use crate::positivity::{domain_weight, gram_pair, lpi_param_map, weight_op, PositivityBasis, PsdVarHandle};
use crate::sdp::{block_min_eigs, solve_sdp, CEntry, Entry, SdpProblem, SdpSettings, SdpSolution, SdpStatus};

/// Hard caps that keep the dense interior-point solve within reach.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeLimits {
    pub max_block: usize,
    pub max_constraints: usize,
}

impl Default for SizeLimits {
    fn default() -> Self {
        SizeLimits { max_block: 600, max_constraints: 5000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpiOptions {
    pub degree: u32,
    pub eps: Rat,
    /// `None` means `1e-5 · area`
    pub del: Option<Rat>,
    /// slack degree `d'`; must not be below the computed one
    pub slack_degree: Option<u32>,
    pub limits: SizeLimits,
}

impl Default for LpiOptions {
    fn default() -> Self {
        LpiOptions { degree: 1, eps: f64_to_rat(1e-5), del: None, slack_degree: None, limits: SizeLimits::default() }
    }
}

impl LpiOptions {
    pub fn with_degree(d: u32) -> Self {
        LpiOptions { degree: d, ..Default::default() }
    }
    pub fn del_for(&self, rect: &Rect) -> Rat {
        self.del.clone().unwrap_or_else(|| f64_to_rat(1e-5) * rect.area())
    }
}

/// `(out, in, tx, ty)` of a kernel.
pub type TermKey = (usize, usize, Ty, Ty);

/// One scalar coefficient of one kernel entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoefKey {
    pub out: usize,
    pub inp: usize,
    pub tx: Ty,
    pub ty: Ty,
    pub r: usize,
    pub c: usize,
    pub mono: Mono,
}

fn comp_name(i: usize) -> &'static str {
    ["R", "X", "Y", "XY"][i]
}

fn term_name(k: &TermKey) -> String {
    format!("{}<-{} ({},{})", comp_name(k.0), comp_name(k.1), k.2.name(), k.3.name())
}

/// Which kernel of an adjoint pair is matched. `Some(true)` marks a term that
/// is its own partner, where only `r ≤ c` is kept.
fn canonical(o: Comp, i: Comp, tx: Ty, ty: Ty) -> Option<bool> {
    if o.idx() != i.idx() {
        return (o.idx() < i.idx()).then_some(false);
    }
    let adj = (tx.adjoint(), ty.adjoint());
    match (tx, ty).cmp(&adj) {
        std::cmp::Ordering::Less => Some(false),
        std::cmp::Ordering::Equal => Some(true),
        std::cmp::Ordering::Greater => None,
    }
}

/// Visit every matched coefficient of a self-adjoint operator.
fn for_each_coef<F: Scalar>(op: &PiOp<F>, mut f: impl FnMut(CoefKey, &F)) {
    for (o, i, tx, ty, k) in op.terms() {
        let Some(selfpair) = canonical(o, i, tx, ty) else { continue };
        for r in 0..k.rows {
            let c0 = if selfpair { r } else { 0 };
            for c in c0..k.cols {
                for (m, v) in &k.get(r, c).terms {
                    f(CoefKey { out: o.idx(), inp: i.idx(), tx, ty, r, c, mono: *m }, v);
                }
            }
        }
    }
}

/// Largest kernel degree of every term present.
pub fn degree_profile<F: Scalar>(op: &PiOp<F>) -> BTreeMap<TermKey, u32> {
    op.terms().map(|(o, i, tx, ty, k)| ((o.idx(), i.idx(), tx, ty), k.degree())).collect()
}

fn merge_profile(acc: &mut BTreeMap<TermKey, u32>, p: BTreeMap<TermKey, u32>) {
    for (k, d) in p {
        let e = acc.entry(k).or_insert(0);
        *e = (*e).max(d);
    }
}

fn integrated(t: Ty) -> u32 {
    matches!(t, Ty::L | Ty::U) as u32
}

/// Smallest slack degree whose Gram terms reach every kernel degree of `D`,
/// for a weight of degree `w`.
pub fn required_slack_degree(profile: &BTreeMap<TermKey, u32>, w: u32) -> u32 {
    let xy = Comp::XY.idx();
    let mut s = 0;
    for (&(o, i, tx, ty), &deg) in profile {
        let need = if o == xy && i == xy {
            let k = integrated(tx) + integrated(ty);
            deg.saturating_sub(k + w).div_ceil(2)
        } else if o == i {
            0
        } else {
            // constant block against an integral block: one integral per direction
            deg.saturating_sub(w + 2)
        };
        s = s.max(need);
    }
    s
}

/// Slack blocks that can be nonzero. A Gram block that only feeds kernels
/// absent from `D` is forced to zero by positivity, so dropping it loses nothing.
pub fn slack_blocks(profile: &BTreeMap<TermKey, u32>) -> [bool; 9] {
    let xy = Comp::XY.idx();
    let has = |f: &dyn Fn(Ty, Ty) -> bool| profile.keys().any(|&(o, i, tx, ty)| o == xy && i == xy && f(tx, ty));
    let mm = has(&|tx, ty| tx == Ty::M && ty == Ty::M);
    let ym = has(&|_, ty| ty == Ty::M);
    let xm = has(&|tx, _| tx == Ty::M);
    [mm, ym, ym, xm, xm, true, true, true, true]
}

/// Sizes of the SDP, known before the expensive symbolic assembly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpiSize {
    pub degree: u32,
    pub slack_degree: [u32; 2],
    pub d_max_degree: u32,
    /// Gram sizes of `P₁`, `P₂`, `Q₁`, `Q₂`
    pub blocks: [usize; 4],
    /// matched coefficients of `D` alone (a lower bound on the constraint count)
    pub d_coefficients: usize,
}

impl LpiSize {
    pub fn check(&self, limits: &SizeLimits) -> Result<()> {
        let big = *self.blocks.iter().max().unwrap_or(&0);
        if big > limits.max_block || self.d_coefficients > limits.max_constraints {
            return Err(Error::TooLarge(format!(
                "degree {} needs slack degree {:?} (D has kernel degree {}), Gram blocks {:?} and at least {} equality constraints; limits are block {} and {} constraints",
                self.degree,
                self.slack_degree,
                self.d_max_degree,
                self.blocks,
                self.d_coefficients,
                limits.max_block,
                limits.max_constraints
            )));
        }
        Ok(())
    }
}

fn random_gram(q: usize, rng: &mut ChaCha8Rng) -> PolyMat<f64> {
    let mut m = PolyMat::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v = Poly::constant(rng.gen_range(0.5..1.5));
            m.set(i, j, v.clone());
            m.set(j, i, v);
        }
    }
    m
}

fn d_operator<F: Scalar>(t: &PiOp<F>, a: &PiOp<F>, p: &PiOp<F>, del: &F) -> Result<PiOp<F>> {
    let apt = a.adjoint().compose(&p.compose(t)?)?;
    let tt = t.adjoint().compose(t)?;
    Ok(tt.scale(del).add(&apt).add(&apt.adjoint()).neg())
}

struct Plan {
    basis: PositivityBasis,
    slack: [PositivityBasis; 2],
    size: LpiSize,
}

fn plan(pair: &PiePair, opts: &LpiOptions) -> Result<Plan> {
    let rect = &pair.rect;
    let basis = PositivityBasis::with_ode(pair.n_ode, pair.n, opts.degree);
    let q = basis.q();
    if q > opts.limits.max_block {
        return Err(Error::TooLarge(format!(
            "degree {} gives a {q}x{q} Gram matrix for P, limit {}",
            opts.degree, opts.limits.max_block
        )));
    }
    // kernel structure of D from one generic P
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = domain_weight::<f64>(rect);
    let p = lpi_param_map(&basis, &random_gram(q, &mut rng), &Poly::one(), rect)?
        .add(&lpi_param_map(&basis, &random_gram(q, &mut rng), &g, rect)?);
    let d = d_operator(&pair.t.to_f64(), &pair.a.to_f64(), &p, &0.5)?;
    let profile = degree_profile(&d);
    let mut coefs = 0usize;
    for_each_coef(&d, |_, _| coefs += 1);
    // Ω_{d'} shares one degree between both handles; the weighted one reaches
    // four degrees higher, so it sets the requirement
    let need = required_slack_degree(&profile, 4);
    let sd = match opts.slack_degree {
        Some(o) if o < need => {
            return Err(Error::Op(format!("slack degree {o} is below the required {need}")));
        }
        Some(o) => o,
        None => need,
    };
    let s = [sd, sd];
    let keep = slack_blocks(&profile);
    let slack = s.map(|sd| PositivityBasis::with_ode(pair.n_ode, pair.n, sd).pruned(keep, true));
    let size = LpiSize {
        degree: opts.degree,
        slack_degree: s,
        d_max_degree: profile.values().copied().max().unwrap_or(0),
        blocks: [q, q, slack[0].q(), slack[1].q()],
        d_coefficients: coefs,
    };
    Ok(Plan { basis, slack, size })
}

/// Sizes of the LPI for a PIE at the given options, without assembling it.
pub fn estimate_size(pair: &PiePair, opts: &LpiOptions) -> Result<LpiSize> {
    Ok(plan(pair, opts)?.size)
}

/// The assembled SDP with everything needed to map a solution back.
#[derive(Clone, Debug)]
pub struct LpiProblem {
    pub pair: PiePair,
    pub eps: Rat,
    pub del: Rat,
    pub basis: PositivityBasis,
    pub slack: [PositivityBasis; 2],
    pub size: LpiSize,
    /// `P₁`, `P₂`, `Q₁`, `Q₂`
    pub handles: [PsdVarHandle; 4],
    /// SDP block of each handle
    pub block_of: [Option<usize>; 4],
    pub keys: Vec<CoefKey>,
    pub d_profile: BTreeMap<TermKey, u32>,
    pub slack_profile: BTreeMap<TermKey, u32>,
    pub sdp: SdpProblem,
}

impl LpiProblem {
    pub fn degree(&self) -> u32 {
        self.size.degree
    }
}

/// Per-variable coefficient lists, keyed by [`CoefKey`].
type Contrib = Vec<(CoefKey, f64)>;

fn collect(op: &PiOp, sign: f64) -> Contrib {
    let mut v = Vec::new();
    for_each_coef(op, |k, c| v.push((k, sign * rat_to_f64(c))));
    v
}

/// Gram terms `z_k* g z_l (+ adjoint)` of one handle, paired with `f`.
fn gram_terms(
    basis: &PositivityBasis,
    g: &Poly,
    rect: &Rect,
    mut f: impl FnMut(usize, usize, &[PiOp], &[PiOp]) -> Result<PiOp>,
) -> Result<Vec<(usize, usize, PiOp)>> {
    let rows = basis.z_rows::<Rat>(rect)?;
    let gop = weight_op(g, 1, rect)?;
    let grows = rows.iter().map(|r| gop.compose(r)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for l in 0..rows.len() {
        for k in 0..=l {
            out.push((k, l, f(k, l, &rows, &grows)?));
        }
    }
    Ok(out)
}

/// `−δ𝒯*𝒯 − 𝒜*𝒫𝒯 − 𝒯*𝒫𝒜 = Ω_{d'}(Q₁, Q₂)` as an SDP over `P₁, P₂, Q₁, Q₂ ⪰ 0`.
pub fn assemble_lpi(pair: &PiePair, opts: &LpiOptions) -> Result<LpiProblem> {
    let rect = &pair.rect;
    let plan = plan(pair, opts)?;
    plan.size.check(&opts.limits)?;
    let eps = opts.eps.clone();
    let del = opts.del_for(rect);
    if eps <= <Rat as Zero>::zero() || del < <Rat as Zero>::zero() {
        return Err(Error::Op(format!("need eps > 0 and del >= 0, got {eps} and {del}")));
    }
    let (t, a) = (&pair.t, &pair.a);
    let weights = [Poly::one(), domain_weight(rect)];

    // D's affine part, one operator per entry of P₁ and P₂
    let rows = plan.basis.z_rows::<Rat>(rect)?;
    let u: Vec<PiOp> = rows.iter().map(|z| z.compose(t)).collect::<Result<_>>()?;
    let vadj: Vec<PiOp> = rows.iter().map(|z| z.compose(a).map(|v| v.adjoint())).collect::<Result<_>>()?;
    let mut contribs: Vec<(usize, usize, usize, Contrib)> = Vec::new();
    let mut d_profile = BTreeMap::new();
    for (h, g) in weights.iter().enumerate() {
        let gop = weight_op(g, 1, rect)?;
        let gu: Vec<PiOp> = u.iter().map(|x| gop.compose(x)).collect::<Result<_>>()?;
        for l in 0..u.len() {
            for k in 0..=l {
                let mut f = vadj[k].compose(&gu[l])?;
                if k != l {
                    f = f.add(&vadj[l].compose(&gu[k])?);
                }
                let dterm = f.add(&f.adjoint()).neg();
                merge_profile(&mut d_profile, degree_profile(&dterm));
                contribs.push((h, k, l, collect(&dterm, 1.0)));
            }
        }
    }
    let tt = t.adjoint().compose(t)?;
    let at = a.adjoint().compose(t)?;
    let d_const = tt.scale(&del).add(&at.add(&at.adjoint()).scale(&eps)).neg();
    merge_profile(&mut d_profile, degree_profile(&d_const));

    // slack
    let mut slack_profile = BTreeMap::new();
    for (s, g) in weights.iter().enumerate() {
        let terms = gram_terms(&plan.slack[s], g, rect, |k, l, rows, grows| gram_pair(rows, grows, k, l))?;
        for (k, l, op) in terms {
            merge_profile(&mut slack_profile, degree_profile(&op));
            contribs.push((2 + s, k, l, collect(&op, -1.0)));
        }
    }
    for (key, &deg) in &d_profile {
        if canonical(COMP[key.0], COMP[key.1], key.2, key.3).is_none() {
            continue;
        }
        match slack_profile.get(key) {
            Some(&sd) if sd >= deg => {}
            got => {
                return Err(Error::Op(format!(
                    "degree shortfall: D kernel {} has degree {deg}, the slack of degree {:?} reaches {}",
                    term_name(key),
                    plan.size.slack_degree,
                    got.map_or("nothing".to_string(), |g| g.to_string())
                )))
            }
        }
    }

    // constraint rows
    let mut keyset: BTreeSet<CoefKey> = BTreeSet::new();
    for (_, _, _, c) in &contribs {
        keyset.extend(c.iter().map(|(k, _)| *k));
    }
    for_each_coef(&d_const, |k, _| {
        keyset.insert(k);
    });
    let keys: Vec<CoefKey> = keyset.into_iter().collect();
    if keys.len() > opts.limits.max_constraints {
        return Err(Error::TooLarge(format!(
            "{} equality constraints, limit {}",
            keys.len(),
            opts.limits.max_constraints
        )));
    }
    let index: BTreeMap<CoefKey, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();

    let handles = [
        PsdVarHandle::for_basis(0, &plan.basis),
        PsdVarHandle::for_basis(1, &plan.basis),
        PsdVarHandle::for_basis(2, &plan.slack[0]),
        PsdVarHandle::for_basis(3, &plan.slack[1]),
    ];
    let mut block_of = [None; 4];
    let mut blocks = Vec::new();
    for (h, hd) in handles.iter().enumerate() {
        if hd.size > 0 {
            block_of[h] = Some(blocks.len());
            blocks.push(hd.size);
        }
    }
    let mut entries = Vec::new();
    for (h, k, l, c) in &contribs {
        let Some(b) = block_of[*h] else { continue };
        for (key, v) in c {
            let v = if k == l { *v } else { 0.5 * v };
            entries.push(Entry { row: index[key], block: b, i: *k, j: *l, v });
        }
    }
    let mut rhs = vec![0.0; keys.len()];
    for_each_coef(&d_const, |k, c| rhs[index[&k]] = -rat_to_f64(c));
    // ε and δ only enter b, which is tiny next to the set of homogeneous
    // solutions; a trace objective keeps the iterates bounded
    let objective = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| (0..s).map(move |i| CEntry { block: b, i, j: i, v: 1.0 }))
        .collect();
    let sdp = SdpProblem { blocks, entries, rhs, objective };
    sdp.check()?;
    Ok(LpiProblem {
        pair: pair.clone(),
        eps,
        del,
        basis: plan.basis,
        slack: plan.slack,
        size: plan.size,
        handles,
        block_of,
        keys,
        d_profile,
        slack_profile,
        sdp,
    })
}

const COMP: [Comp; 4] = [Comp::R, Comp::X, Comp::Y, Comp::XY];

/// Outcome of the independent re-check of a solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub certified: bool,
    pub eps: f64,
    pub del: f64,
    /// upper bound on `‖𝒫‖`
    pub zeta: f64,
    /// `δ/ζ`: `‖u(t)‖² ≤ (ζ/ε)‖u(0)‖² e^{−(δ/ζ)t}`
    pub decay_bound: f64,
    pub degree: u32,
    pub slack_degree: [u32; 2],
    pub p_selfadjoint: bool,
    pub d_selfadjoint: bool,
    pub min_eig: f64,
    pub residual: f64,
    pub failing: Option<String>,
}

pub const EIG_TOL: f64 = -1e-9;
pub const RESIDUAL_TOL: f64 = 1e-7;

fn rounded(x: &Mat<f64>) -> PolyMat {
    let n = x.nrows();
    PolyMat::from_fn(n, n, |i, j| {
        let (i, j) = (i.min(j), i.max(j));
        Poly::constant(f64_to_rat(0.5 * (x[(i, j)] + x[(j, i)])))
    })
}

fn sym_f64(x: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| 0.5 * (x[(i, j)] + x[(j, i)]))
}

/// Upper bound on `sup |p|` over the box.
fn sup_bound(p: &Poly, rect: &Rect) -> f64 {
    let ax = rat_to_f64(&rect.a).abs().max(rat_to_f64(&rect.b).abs());
    let ay = rat_to_f64(&rect.c).abs().max(rat_to_f64(&rect.d).abs());
    let reach = [ax, ay, ax, ay, ax, ay];
    p.terms
        .iter()
        .map(|(m, c)| rat_to_f64(&c.abs()) * (0..6).map(|v| reach[v].powi(m.0[v] as i32)).product::<f64>())
        .sum()
}

/// Norm bound of one term: Hilbert–Schmidt over the integrated and output
/// variables, sup over multiplier variables, Frobenius over matrix entries.
fn term_norm_bound(tx: Ty, ty: Ty, k: &PolyMat, rect: &Rect) -> Result<f64> {
    let mut p = Poly::zero();
    for r in 0..k.rows {
        for c in 0..k.cols {
            let e = k.get(r, c);
            p = p.add(&e.mul(e));
        }
    }
    let cst = |v: &Rat| Bound::Const(v.clone());
    for (t, out, inp, lo, hi) in [(tx, Var::X, Var::Th, &rect.a, &rect.b), (ty, Var::Y, Var::Nu, &rect.c, &rect.d)] {
        p = match t {
            Ty::C | Ty::M => p,
            Ty::I => p.integrate(inp, &cst(lo), &cst(hi))?,
            Ty::B => p.integrate(out, &cst(lo), &cst(hi))?,
            Ty::L => p.integrate(inp, &cst(lo), &Bound::Var(out))?.integrate(out, &cst(lo), &cst(hi))?,
            Ty::U => p.integrate(inp, &Bound::Var(out), &cst(hi))?.integrate(out, &cst(lo), &cst(hi))?,
        };
    }
    Ok(sup_bound(&p, rect).sqrt())
}

/// Operator-norm upper bound: the sum of per-term bounds.
pub fn norm_bound(op: &PiOp) -> Result<f64> {
    let mut s = 0.0;
    for (_, _, tx, ty, k) in op.terms() {
        s += term_norm_bound(tx, ty, k, &op.rect)?;
    }
    Ok(s)
}

fn max_coef(op: &PiOp) -> f64 {
    let mut m: f64 = 0.0;
    for (_, _, _, _, k) in op.terms() {
        for r in 0..k.rows {
            for c in 0..k.cols {
                for v in k.get(r, c).terms.values() {
                    m = m.max(rat_to_f64(v).abs());
                }
            }
        }
    }
    m
}

/// Concrete operators rebuilt from a solution.
pub struct Reconstruction {
    pub p: PiOp,
    pub d: PiOp,
    pub slack: PiOp,
}

/// Rebuild `𝒫`, `D` and the slack exactly from rounded Gram matrices.
pub fn reconstruct(lpi: &LpiProblem, x: &[Mat<f64>]) -> Result<Reconstruction> {
    let rect = &lpi.pair.rect;
    let mats: Vec<PolyMat> = (0..4)
        .map(|h| match lpi.block_of[h] {
            Some(b) => rounded(&x[b]),
            None => PolyMat::zeros(lpi.handles[h].size, lpi.handles[h].size),
        })
        .collect();
    let g = domain_weight(rect);
    let dims = lpi.basis.input_dims();
    let p = PiOp::identity(dims, rect)
        .scale(&lpi.eps)
        .add(&lpi_param_map(&lpi.basis, &mats[0], &Poly::one(), rect)?)
        .add(&lpi_param_map(&lpi.basis, &mats[1], &g, rect)?);
    let d = d_operator(&lpi.pair.t, &lpi.pair.a, &p, &lpi.del)?;
    let slack = lpi_param_map(&lpi.slack[0], &mats[2], &Poly::one(), rect)?
        .add(&lpi_param_map(&lpi.slack[1], &mats[3], &g, rect)?);
    Ok(Reconstruction { p, d, slack })
}

/// Independent check of a solver answer against the LPI.
pub fn verify_certificate(lpi: &LpiProblem, sol: &SdpSolution) -> Result<StabilityVerdict> {
    let mut failing = Vec::new();
    // a stalled solve can still hold a valid certificate; the checks below decide
    if sol.status == SdpStatus::InfeasibleCertificate {
        failing.push(format!("solver status {:?}: {}", sol.status, sol.message));
    }
    if sol.x.len() != lpi.sdp.blocks.len()
        || sol.x.iter().zip(&lpi.sdp.blocks).any(|(m, &s)| m.nrows() != s || m.ncols() != s)
    {
        return Err(Error::Dim("solution blocks do not match the LPI".into()));
    }
    let rec = reconstruct(lpi, &sol.x)?;
    let p_sa = rec.p.is_selfadjoint();
    let d_sa = rec.d.is_selfadjoint();
    if !p_sa {
        failing.push("P is not self-adjoint".into());
    }
    if !d_sa {
        failing.push("D is not self-adjoint".into());
    }
    let sx: Vec<Mat<f64>> = sol.x.iter().map(sym_f64).collect();
    let min_eig = block_min_eigs(&sx).into_iter().fold(f64::INFINITY, f64::min);
    if !(min_eig >= EIG_TOL) {
        failing.push(format!("Gram block eigenvalue {min_eig:.3e} below {EIG_TOL:e}"));
    }
    let residual = max_coef(&rec.d.sub(&rec.slack));
    if !(residual <= RESIDUAL_TOL) {
        failing.push(format!("coefficient residual {residual:.3e} above {RESIDUAL_TOL:e}"));
    }
    let zeta = norm_bound(&rec.p)?;
    let del = rat_to_f64(&lpi.del);
    Ok(StabilityVerdict {
        certified: failing.is_empty(),
        eps: rat_to_f64(&lpi.eps),
        del,
        zeta,
        decay_bound: if zeta > 0.0 { del / zeta } else { 0.0 },
        degree: lpi.size.degree,
        slack_degree: lpi.size.slack_degree,
        p_selfadjoint: p_sa,
        d_selfadjoint: d_sa,
        min_eig,
        residual,
        failing: (!failing.is_empty()).then(|| failing.join("; ")),
    })
}

/// Solver figures for reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverInfo {
    pub status: SdpStatus,
    pub iters: usize,
    pub gap: f64,
    pub residuals: Residuals,
    pub constraints: usize,
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

impl SolverInfo {
    pub fn new(lpi: &LpiProblem, sol: &SdpSolution) -> Self {
        SolverInfo {
            status: sol.status,
            iters: sol.iters,
            gap: sol.gap,
            residuals: Residuals { primal: sol.primal_res, dual: sol.dual_res },
            constraints: lpi.sdp.m(),
            blocks: lpi.sdp.blocks.clone(),
        }
    }
}

pub struct StabilityRun {
    pub lpi: LpiProblem,
    pub solution: SdpSolution,
    pub verdict: StabilityVerdict,
}

impl StabilityRun {
    pub fn solver_info(&self) -> SolverInfo {
        SolverInfo::new(&self.lpi, &self.solution)
    }
}

/// Assemble, solve and independently verify.
pub fn certify(pair: &PiePair, opts: &LpiOptions, settings: &SdpSettings) -> Result<StabilityRun> {
    let lpi = assemble_lpi(pair, opts)?;
    let settings = SdpSettings { stop_at_feasible: true, ..settings.clone() };
    let solution = solve_sdp(&lpi.sdp, &settings)?;
    let verdict = verify_certificate(&lpi, &solution)?;
    Ok(StabilityRun { lpi, solution, verdict })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub value: f64,
    pub certified: bool,
    pub note: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// certified below the threshold
    Upper,
    /// certified above the threshold
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisectOutcome {
    pub param: String,
    pub direction: Option<Direction>,
    /// best certified value found
    pub threshold: Option<f64>,
    /// width of the final bracket
    pub resolution: f64,
    pub message: String,
    pub probes: Vec<Probe>,
}

fn value_text(v: f64) -> String {
    // shortest round-trip decimal, read back exactly by the parser
    format!("{v:?}")
}

/// Certify one instance of a template. Too-large problems are errors, other
/// failures count as "not certified".
pub fn probe(template: &str, param: &str, value: f64, opts: &LpiOptions, settings: &SdpSettings) -> Result<Probe> {
    let text = instantiate(template, &[(param, &value_text(value))]);
    let run = parse_pde(&text).and_then(|s| convert(&s)).and_then(|p| certify(&p, opts, settings));
    Ok(match run {
        Ok(r) => Probe {
            value,
            certified: r.verdict.certified,
            note: r.verdict.failing.unwrap_or_else(|| format!("decay bound {:.3e}", r.verdict.decay_bound)),
        },
        Err(e @ Error::TooLarge(_)) => return Err(e),
        Err(e) => Probe { value, certified: false, note: e.to_string() },
    })
}

/// Bisection on one scalar placeholder, assuming certification is monotone
/// over the range. The direction comes from which endpoint certifies.
pub fn bisect_parameter(
    template: &str,
    param: &str,
    lo: f64,
    hi: f64,
    iters: usize,
    opts: &LpiOptions,
    settings: &SdpSettings,
) -> Result<BisectOutcome> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Op(format!("empty range [{lo}, {hi}]")));
    }
    if !template.contains(&format!("{{{param}}}")) {
        return Err(Error::Op(format!("template has no {{{param}}} placeholder")));
    }
    let mut probes = Vec::new();
    let run = |v: f64, probes: &mut Vec<Probe>| -> Result<bool> {
        let p = probe(template, param, v, opts, settings)?;
        let ok = p.certified;
        probes.push(p);
        Ok(ok)
    };
    let at_lo = run(lo, &mut probes)?;
    let at_hi = run(hi, &mut probes)?;
    let out = |direction, threshold, resolution, message: &str, probes| BisectOutcome {
        param: param.to_string(),
        direction,
        threshold,
        resolution,
        message: message.to_string(),
        probes,
    };
    match (at_lo, at_hi) {
        (false, false) => Ok(out(None, None, hi - lo, "range exhausted: no certified value", probes)),
        (true, true) => Ok(out(None, Some(hi), 0.0, "whole range certified", probes)),
        (lo_ok, _) => {
            let dir = if lo_ok { Direction::Upper } else { Direction::Lower };
            // good end certifies, bad end does not
            let (mut good, mut bad) = if lo_ok { (lo, hi) } else { (hi, lo) };
            for _ in 0..iters {
                let mid = 0.5 * (good + bad);
                if run(mid, &mut probes)? {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            Ok(out(Some(dir), Some(good), (good - bad).abs(), "bisection finished", probes))
        }
    }
}

/// JSON report of a stability run or a bisection.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub verdict: String,
    pub eps: f64,
    pub del: f64,
    pub zeta: f64,
    pub decay_bound: f64,
    pub degree: u32,
    pub slack_degree: [u32; 2],
    pub solver: Option<SolverInfo>,
    pub failing: Option<String>,
    pub threshold: Option<f64>,
    pub probes: Vec<Probe>,
}

pub fn verdict_word(certified: bool) -> String {
    if certified { "certified" } else { "not certified" }.to_string()
}

impl StabilityReport {
    pub fn from_run(run: &StabilityRun) -> Self {
        let v = &run.verdict;
        StabilityReport {
            verdict: verdict_word(v.certified),
            eps: v.eps,
            del: v.del,
            zeta: v.zeta,
            decay_bound: v.decay_bound,
            degree: v.degree,
            slack_degree: v.slack_degree,
            solver: Some(run.solver_info()),
            failing: v.failing.clone(),
            threshold: None,
            probes: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::parse_pde;

    const DECAY: &str = "[domain]\nx = 0 1\ny = 0 1\n[states]\nn0 = 1\nn1 = 0\nn2 = 0\n[dynamics]\nA00 = -1\n";

    fn decay() -> PiePair {
        convert(&parse_pde(DECAY).unwrap()).unwrap()
    }

    #[test]
    fn canonical_halves() {
        assert_eq!(canonical(Comp::XY, Comp::XY, Ty::M, Ty::M), Some(true));
        assert_eq!(canonical(Comp::XY, Comp::XY, Ty::L, Ty::U), Some(false));
        assert_eq!(canonical(Comp::XY, Comp::XY, Ty::U, Ty::L), None);
        assert_eq!(canonical(Comp::R, Comp::XY, Ty::I, Ty::I), Some(false));
        assert_eq!(canonical(Comp::XY, Comp::R, Ty::B, Ty::B), None);
    }

    #[test]
    fn decay_certifies_at_degree_zero() {
        let run = certify(&decay(), &LpiOptions::with_degree(0), &SdpSettings::default()).unwrap();
        assert_eq!(run.solution.status, SdpStatus::Feasible, "{}", run.solution.message);
        assert!(run.verdict.certified, "{:?}", run.verdict);
        assert!(run.verdict.zeta > 0.0 && run.verdict.decay_bound > 0.0);
    }

    #[test]
    fn norm_bound_of_identity_is_one() {
        let id = PiOp::identity([0, 0, 0, 1], &Rect::unit());
        assert!((norm_bound(&id).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_large_is_reported() {
        let mut o = LpiOptions::with_degree(0);
        o.limits.max_block = 3;
        assert!(matches!(assemble_lpi(&decay(), &o), Err(Error::TooLarge(_))));
    }
}
