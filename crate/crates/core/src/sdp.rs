//! Primal-dual interior-point solver for block-diagonal SDPs, plus SDPA I/O.
//!
//! Standard primal form over PSD blocks `X = diag(X_1, ..., X_k)`:
//!
//! ```text
//! min ⟨C, X⟩  s.t.  ⟨A_i, X⟩ = b_i,  X ⪰ 0
//! max bᵀy     s.t.  Σ y_i A_i + Z = C,  Z ⪰ 0
//! ```
//!
//! The search direction is HKM with a Mehrotra predictor-corrector. The Schur
//! complement `M_ij = ⟨A_i, X A_j Z⁻¹⟩` is formed constraint by constraint
//! from the sparse `A_j`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::Side;
use serde::Serialize;

use crate::error::{Error, Result};

/// One entry of a symmetric constraint matrix (`i ≤ j`, mirrored when `i < j`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub row: usize,
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub v: f64,
}

/// Entry of the objective matrix `C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CEntry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub entries: Vec<Entry>,
    pub rhs: Vec<f64>,
    /// empty for a pure feasibility problem
    pub objective: Vec<CEntry>,
}

impl SdpProblem {
    pub fn m(&self) -> usize {
        self.rhs.len()
    }
    pub fn n(&self) -> usize {
        self.blocks.iter().sum()
    }
    pub fn check(&self) -> Result<()> {
        if self.blocks.iter().any(|&s| s == 0) {
            return Err(Error::Sdp("empty PSD block".into()));
        }
        let bad = |b: usize, i: usize, j: usize| b >= self.blocks.len() || i > j || j >= self.blocks[b];
        for e in &self.entries {
            if e.row >= self.m() || bad(e.block, e.i, e.j) {
                return Err(Error::Sdp(format!("constraint entry out of range: {e:?}")));
            }
        }
        for e in &self.objective {
            if bad(e.block, e.i, e.j) {
                return Err(Error::Sdp(format!("objective entry out of range: {e:?}")));
            }
        }
        Ok(())
    }
    /// `⟨A_i, X⟩` for every row.
    pub fn apply(&self, x: &[Mat<f64>]) -> Vec<f64> {
        let mut r = vec![0.0; self.m()];
        for e in &self.entries {
            let xm = &x[e.block];
            r[e.row] += if e.i == e.j { e.v * xm[(e.i, e.i)] } else { e.v * (xm[(e.i, e.j)] + xm[(e.j, e.i)]) };
        }
        r
    }
    /// `Σ y_i A_i`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Vec<Mat<f64>> {
        let mut r: Vec<Mat<f64>> = self.blocks.iter().map(|&s| Mat::zeros(s, s)).collect();
        for e in &self.entries {
            let v = e.v * y[e.row];
            r[e.block][(e.i, e.j)] += v;
            if e.i != e.j {
                r[e.block][(e.j, e.i)] += v;
            }
        }
        r
    }
    pub fn c_matrix(&self) -> Vec<Mat<f64>> {
        let mut c: Vec<Mat<f64>> = self.blocks.iter().map(|&s| Mat::zeros(s, s)).collect();
        for e in &self.objective {
            c[e.block][(e.i, e.j)] += e.v;
            if e.i != e.j {
                c[e.block][(e.j, e.i)] += e.v;
            }
        }
        c
    }
    /// Keep only the given rows, renumbered in order.
    pub fn restrict_rows(&self, keep: &[usize]) -> SdpProblem {
        let mut map = vec![usize::MAX; self.m()];
        for (k, &r) in keep.iter().enumerate() {
            map[r] = k;
        }
        SdpProblem {
            blocks: self.blocks.clone(),
            entries: self
                .entries
                .iter()
                .filter(|e| map[e.row] != usize::MAX)
                .map(|e| Entry { row: map[e.row], ..*e })
                .collect(),
            rhs: keep.iter().map(|&r| self.rhs[r]).collect(),
            objective: self.objective.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// stop as soon as the primal residual is met, whatever the objective
    pub stop_at_feasible: bool,
    pub verbose: bool,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings { tol: 1e-8, max_iter: 200, stop_at_feasible: false, verbose: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Feasible,
    InfeasibleCertificate,
    MaxIter,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<Mat<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<Mat<f64>>,
    /// `‖b − 𝒜(X)‖ / (1 + ‖b‖)`
    pub primal_res: f64,
    /// `‖C − 𝒜*(y) − Z‖_F / (1 + ‖C‖_F)`
    pub dual_res: f64,
    /// `|⟨C,X⟩ − bᵀy| + ⟨X,Z⟩`, relative to `1 + |⟨C,X⟩| + |bᵀy|`
    pub gap: f64,
    pub iters: usize,
    pub min_eig_x: f64,
    pub message: String,
}

fn dot(a: &[Mat<f64>], b: &[Mat<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut s = 0.0;
            for j in 0..x.ncols() {
                for i in 0..x.nrows() {
                    s += x[(i, j)] * y[(i, j)];
                }
            }
            s
        })
        .sum()
}

fn fro(a: &[Mat<f64>]) -> f64 {
    dot(a, a).sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sym(m: &Mat<f64>) -> Mat<f64> {
    let n = m.nrows();
    Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn min_eig(m: &Mat<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    match sym(m).self_adjoint_eigenvalues(Side::Lower) {
        Ok(v) => v.first().copied().unwrap_or(f64::INFINITY),
        Err(_) => f64::NAN,
    }
}

/// Smallest eigenvalue of every block.
pub fn block_min_eigs(x: &[Mat<f64>]) -> Vec<f64> {
    x.iter().map(min_eig).collect()
}

/// Largest `α` with `X + α dX ⪰ 0` (infinite when `dX ⪰ 0`).
fn max_step(x: &Mat<f64>, dx: &Mat<f64>) -> Option<f64> {
    let l = x.llt(Side::Lower).ok()?;
    let mut w = dx.clone();
    let lm = l.L();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(lm, w.as_mut(), Par::Seq);
    let mut wt = w.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(lm, wt.as_mut(), Par::Seq);
    let e = min_eig(&wt);
    if e.is_nan() {
        return None;
    }
    Some(if e >= 0.0 { f64::INFINITY } else { -1.0 / e })
}

/// Constraint data grouped per block and per row.
struct Layout {
    /// `per_block[b]` = list of (row, entries) touching block `b`
    per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
}

impl Layout {
    fn new(p: &SdpProblem) -> Self {
        let mut maps: Vec<BTreeMap<usize, Vec<(usize, usize, f64)>>> = vec![BTreeMap::new(); p.blocks.len()];
        for e in &p.entries {
            if e.v != 0.0 {
                maps[e.block].entry(e.row).or_default().push((e.i, e.j, e.v));
            }
        }
        Layout { per_block: maps.into_iter().map(|m| m.into_iter().collect()).collect() }
    }

    /// `M_ij = ⟨A_i, X A_j Z⁻¹⟩`.
    fn schur(&self, m: usize, x: &[Mat<f64>], zinv: &[Mat<f64>]) -> Mat<f64> {
        let mut s = Mat::<f64>::zeros(m, m);
        for (b, rows) in self.per_block.iter().enumerate() {
            let n = x[b].nrows();
            let (xb, zb) = (&x[b], &zinv[b]);
            for (rj, aj) in rows {
                // rows touched by A_j and the matching rows of A_j Z⁻¹
                let mut idx: Vec<usize> = aj.iter().flat_map(|&(i, j, _)| [i, j]).collect();
                idx.sort_unstable();
                idx.dedup();
                let pos = |k: usize| idx.binary_search(&k).unwrap();
                let mut t = Mat::<f64>::zeros(idx.len(), n);
                for &(i, j, v) in aj {
                    let (pi, pj) = (pos(i), pos(j));
                    for c in 0..n {
                        t[(pi, c)] += v * zb[(j, c)];
                    }
                    if i != j {
                        for c in 0..n {
                            t[(pj, c)] += v * zb[(i, c)];
                        }
                    }
                }
                let xs = Mat::from_fn(n, idx.len(), |r, c| xb[(r, idx[c])]);
                let g = &xs * &t;
                for (ri, ai) in rows {
                    if ri < rj {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(i, j, v) in ai {
                        acc += if i == j { v * g[(i, i)] } else { v * (g[(i, j)] + g[(j, i)]) };
                    }
                    s[(*ri, *rj)] += acc;
                }
            }
        }
        for j in 0..m {
            for i in 0..j {
                s[(i, j)] = s[(j, i)];
            }
        }
        s
    }
}

/// Rows of the constraint system that are linearly independent.
///
/// Rows are normalized, their Gram matrix is factored by pivoted Cholesky and
/// rows with a negligible pivot are dropped. Inconsistent right-hand sides on
/// dropped rows are reported as an error.
pub fn presolve(p: &SdpProblem) -> Result<Vec<usize>> {
    let m = p.m();
    if m == 0 {
        return Ok(Vec::new());
    }
    // sparse rows over a flat index of upper-triangular entries (off-diagonals weighted by 2)
    let mut off = vec![0usize; p.blocks.len() + 1];
    for (b, &s) in p.blocks.iter().enumerate() {
        off[b + 1] = off[b] + s * (s + 1) / 2;
    }
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); m];
    for e in &p.entries {
        let k = off[e.block] + e.j * (e.j + 1) / 2 + e.i;
        let w = if e.i == e.j { 1.0 } else { std::f64::consts::SQRT_2 };
        *rows[e.row].entry(k).or_insert(0.0) += w * e.v;
    }
    let norms: Vec<f64> = rows.iter().map(|r| r.values().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut cols: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        for (&k, &v) in r {
            if norms[i] > 0.0 {
                cols.entry(k).or_default().push((i, v / norms[i]));
            }
        }
    }
    let mut g = Mat::<f64>::zeros(m, m);
    for col in cols.values() {
        for &(i, vi) in col {
            for &(j, vj) in col {
                if j <= i {
                    g[(i, j)] += vi * vj;
                }
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    let scaled_b: Vec<f64> = (0..m).map(|i| if norms[i] > 0.0 { p.rhs[i] / norms[i] } else { p.rhs[i] }).collect();
    let bscale = 1.0 + norm(&scaled_b);
    // pivoted Cholesky, outer-product form
    let mut piv: Vec<usize> = (0..m).collect();
    let mut a = g.clone();
    let mut rank = 0;
    let tol = 1e-10;
    for k in 0..m {
        let (mut best, mut bi) = (-1.0, k);
        for t in k..m {
            let d = a[(piv[t], piv[t])];
            if d > best {
                best = d;
                bi = t;
            }
        }
        if best <= tol {
            break;
        }
        piv.swap(k, bi);
        let pk = piv[k];
        let d = a[(pk, pk)].sqrt();
        for t in k + 1..m {
            let pt = piv[t];
            a[(pt, pk)] /= d;
        }
        for t in k + 1..m {
            let pt = piv[t];
            let lt = a[(pt, pk)];
            if lt == 0.0 {
                continue;
            }
            for u in k + 1..=t {
                let pu = piv[u];
                let v = lt * a[(pu, pk)];
                a[(pt, pu)] -= v;
                a[(pu, pt)] = a[(pt, pu)];
            }
        }
        rank = k + 1;
    }
    let mut keep: Vec<usize> = piv[..rank].to_vec();
    keep.sort_unstable();
    for i in 0..m {
        if norms[i] == 0.0 && p.rhs[i].abs() > 1e-12 * bscale {
            return Err(Error::Sdp(format!("inconsistent constraints: row {i} is empty but b = {}", p.rhs[i])));
        }
    }
    if rank < m {
        // least-norm solution through the kept rows, then check every row
        let gk = Mat::from_fn(rank, rank, |i, j| g[(keep[i], keep[j])]);
        let rhs = Mat::from_fn(rank, 1, |i, _| scaled_b[keep[i]]);
        let w = gk
            .llt(Side::Lower)
            .map_err(|_| Error::Sdp("presolve: kept rows are numerically dependent".into()))?
            .solve(&rhs);
        for i in 0..m {
            if norms[i] == 0.0 {
                continue;
            }
            let pred: f64 = keep.iter().enumerate().map(|(k, &r)| g[(i, r)] * w[(k, 0)]).sum();
            if (pred - scaled_b[i]).abs() > 1e-7 * bscale {
                return Err(Error::Sdp(format!(
                    "inconsistent constraints: row {i} is dependent on the others but its right-hand side disagrees by {:.3e}",
                    (pred - scaled_b[i]).abs()
                )));
            }
        }
    }
    Ok(keep)
}

struct Iterate {
    x: Vec<Mat<f64>>,
    y: Vec<f64>,
    z: Vec<Mat<f64>>,
}

fn residuals(p: &SdpProblem, c: &[Mat<f64>], it: &Iterate) -> (Vec<f64>, Vec<Mat<f64>>) {
    let ax = p.apply(&it.x);
    let rp: Vec<f64> = p.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let aty = p.apply_adjoint(&it.y);
    let rd: Vec<Mat<f64>> = c.iter().zip(&aty).zip(&it.z).map(|((c, a), z)| c - a - z).collect();
    (rp, rd)
}

/// Relative measures reported for any `(X, y, Z)`, recomputed from the matrices.
pub fn measure(p: &SdpProblem, x: &[Mat<f64>], y: &[f64], z: &[Mat<f64>]) -> (f64, f64, f64) {
    let c = p.c_matrix();
    let it = Iterate { x: x.to_vec(), y: y.to_vec(), z: z.to_vec() };
    let (rp, rd) = residuals(p, &c, &it);
    let pobj = dot(&c, x);
    let dobj: f64 = p.rhs.iter().zip(y).map(|(b, y)| b * y).sum();
    let gap = ((pobj - dobj).abs() + dot(x, z).abs()) / (1.0 + pobj.abs() + dobj.abs());
    (norm(&rp) / (1.0 + norm(&p.rhs)), fro(&rd) / (1.0 + fro(&c)), gap)
}

/// Indices of each block that may be nonzero in a feasible `X`.
///
/// A row `Σ c_k X_kk = 0` with all `c_k` of one sign forces those diagonal
/// entries, and with them whole rows and columns of `X ⪰ 0`, to zero. Dropping
/// them can expose further such rows, so the scan repeats to a fixed point.
/// Without this step problems with no strictly feasible point leave the
/// interior-point method badly conditioned.
pub fn facial_reduction(p: &SdpProblem) -> Vec<Vec<usize>> {
    let mut dead: Vec<Vec<bool>> = p.blocks.iter().map(|&s| vec![false; s]).collect();
    let mut by_row: Vec<Vec<&Entry>> = vec![Vec::new(); p.m()];
    for e in &p.entries {
        by_row[e.row].push(e);
    }
    loop {
        let mut changed = false;
        for (r, es) in by_row.iter().enumerate() {
            let mut agg: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
            for e in es {
                if !dead[e.block][e.i] && !dead[e.block][e.j] {
                    *agg.entry((e.block, e.i, e.j)).or_insert(0.0) += e.v;
                }
            }
            agg.retain(|_, v| *v != 0.0);
            let big = agg.values().fold(0.0f64, |m, v| m.max(v.abs()));
            if agg.is_empty() || p.rhs[r].abs() > 1e-14 * big {
                continue;
            }
            let diag = agg.keys().all(|&(_, i, j)| i == j);
            let pos = agg.values().all(|&v| v > 0.0);
            let neg = agg.values().all(|&v| v < 0.0);
            if diag && (pos || neg) {
                for &(b, i, _) in agg.keys() {
                    dead[b][i] = true;
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dead.iter().map(|d| (0..d.len()).filter(|&i| !d[i]).collect()).collect()
}

/// The problem restricted to the given indices; blocks left empty disappear.
/// Returns the reduced problem and the original block of each new block.
pub fn restrict_indices(p: &SdpProblem, kept: &[Vec<usize>]) -> (SdpProblem, Vec<usize>) {
    let mut newb = vec![usize::MAX; p.blocks.len()];
    let mut origin = Vec::new();
    let mut blocks = Vec::new();
    let mut pos: Vec<Vec<usize>> = p.blocks.iter().map(|&s| vec![usize::MAX; s]).collect();
    for (b, k) in kept.iter().enumerate() {
        if k.is_empty() {
            continue;
        }
        newb[b] = blocks.len();
        origin.push(b);
        blocks.push(k.len());
        for (t, &i) in k.iter().enumerate() {
            pos[b][i] = t;
        }
    }
    let map = |b: usize, i: usize, j: usize| -> Option<(usize, usize, usize)> {
        let (pi, pj) = (pos[b][i], pos[b][j]);
        (pi != usize::MAX && pj != usize::MAX).then(|| (newb[b], pi.min(pj), pi.max(pj)))
    };
    let entries = p
        .entries
        .iter()
        .filter_map(|e| map(e.block, e.i, e.j).map(|(block, i, j)| Entry { row: e.row, block, i, j, v: e.v }))
        .collect();
    let objective = p
        .objective
        .iter()
        .filter_map(|e| map(e.block, e.i, e.j).map(|(block, i, j)| CEntry { block, i, j, v: e.v }))
        .collect();
    (SdpProblem { blocks, entries, rhs: p.rhs.clone(), objective }, origin)
}

/// Solve the SDP. Forced-zero indices and dependent constraints are removed
/// first; reported residuals refer to the reduced problem, which has the same
/// primal feasible set.
pub fn solve_sdp(p: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    p.check()?;
    let kept = facial_reduction(p);
    let (red, origin) = restrict_indices(p, &kept);
    if red.blocks.is_empty() {
        let bad = red.rhs.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if bad > 0.0 {
            return Err(Error::Sdp(format!("inconsistent constraints: every block is forced to zero but |b| reaches {bad:.3e}")));
        }
        let x: Vec<Mat<f64>> = p.blocks.iter().map(|&s| Mat::zeros(s, s)).collect();
        return Ok(SdpSolution {
            status: SdpStatus::Feasible,
            z: x.clone(),
            x,
            y: vec![0.0; p.m()],
            primal_res: 0.0,
            dual_res: 0.0,
            gap: 0.0,
            iters: 0,
            min_eig_x: 0.0,
            message: "all blocks forced to zero".into(),
        });
    }
    let keep = presolve(&red)?;
    let mut q = if keep.len() < red.m() { red.restrict_rows(&keep) } else { red.clone() };
    // X scales with b, y and Z do not
    let bscale = norm(&q.rhs);
    let bscale = if bscale > 0.0 { bscale } else { 1.0 };
    q.rhs.iter_mut().for_each(|b| *b /= bscale);
    // the relative measures of the scaled problem can be looser by up to max(2, bscale)
    let inner = SdpSettings { tol: settings.tol / bscale.max(2.0), ..settings.clone() };
    let mut sol = ipm(&q, &inner)?;
    sol.x.iter_mut().for_each(|x| *x *= bscale);
    // dual multipliers of dropped rows are zero
    let mut y = vec![0.0; p.m()];
    for (k, &r) in keep.iter().enumerate() {
        y[r] = sol.y[k];
    }
    sol.y = y;
    let (pr, dr, gap) = measure(&red, &sol.x, &sol.y, &sol.z);
    sol.primal_res = pr;
    sol.dual_res = dr;
    sol.gap = gap;
    // back to the full index set, zero on the removed face
    let expand = |m: &[Mat<f64>]| -> Vec<Mat<f64>> {
        let mut full: Vec<Mat<f64>> = p.blocks.iter().map(|&s| Mat::zeros(s, s)).collect();
        for (nb, &b) in origin.iter().enumerate() {
            let k = &kept[b];
            for (a, &i) in k.iter().enumerate() {
                for (c, &j) in k.iter().enumerate() {
                    full[b][(i, j)] = m[nb][(a, c)];
                }
            }
        }
        full
    };
    sol.x = expand(&sol.x);
    sol.z = expand(&sol.z);
    let removed: usize = p.n() - red.n();
    if removed > 0 {
        sol.message = format!("{}{}{removed} indices fixed at zero", sol.message, if sol.message.is_empty() { "" } else { "; " });
    }
    Ok(sol)
}

/// Diagonally pivoted Cholesky that stops at negligible pivots.
///
/// Near a face of the cone the Schur complement becomes singular: constraints
/// that are independent in general turn dependent on the face. The components
/// of `dy` along the dropped pivots are set to zero.
struct PivChol {
    m: usize,
    perm: Vec<usize>,
    rank: usize,
    /// row-major by original index, `l[q * m + k]`
    l: Vec<f64>,
}

impl PivChol {
    fn new(a: &Mat<f64>, rel_tol: f64) -> Option<PivChol> {
        let m = a.nrows();
        let mut d: Vec<f64> = (0..m).map(|i| a[(i, i)]).collect();
        let dmax = d.iter().cloned().fold(0.0, f64::max);
        if m == 0 {
            return Some(PivChol { m, perm: Vec::new(), rank: 0, l: Vec::new() });
        }
        if !(dmax > 0.0) || !dmax.is_finite() {
            return None;
        }
        let mut perm: Vec<usize> = (0..m).collect();
        let mut l = vec![0.0; m * m];
        let mut rank = 0;
        for k in 0..m {
            let (mut bi, mut best) = (k, f64::NEG_INFINITY);
            for (t, &q) in perm.iter().enumerate().skip(k) {
                if d[q] > best {
                    best = d[q];
                    bi = t;
                }
            }
            if best <= rel_tol * dmax {
                break;
            }
            perm.swap(k, bi);
            let p = perm[k];
            let lkk = best.sqrt();
            l[p * m + k] = lkk;
            let lp = l[p * m..p * m + k].to_vec();
            for &q in &perm[k + 1..] {
                let lq = &l[q * m..q * m + k];
                let dotv: f64 = lq.iter().zip(&lp).map(|(x, y)| x * y).sum();
                let v = (a[(q, p)] - dotv) / lkk;
                l[q * m + k] = v;
                d[q] -= v * v;
            }
            rank = k + 1;
        }
        Some(PivChol { m, perm, rank, l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (m, r) = (self.m, self.rank);
        let mut z = vec![0.0; r];
        for k in 0..r {
            let p = self.perm[k];
            let row = &self.l[p * m..p * m + k];
            let s: f64 = row.iter().zip(&z).map(|(x, y)| x * y).sum();
            z[k] = (b[p] - s) / self.l[p * m + k];
        }
        for k in (0..r).rev() {
            let mut s = z[k];
            for t in k + 1..r {
                s -= self.l[self.perm[t] * m + k] * z[t];
            }
            z[k] = s / self.l[self.perm[k] * m + k];
        }
        let mut x = vec![0.0; m];
        for k in 0..r {
            x[self.perm[k]] = z[k];
        }
        x
    }

    /// Solve with one step of iterative refinement against the full matrix.
    fn solve_refined(&self, a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve(b);
        let m = self.m;
        let mut res = b.to_vec();
        for j in 0..m {
            let xj = x[j];
            if xj != 0.0 {
                for i in 0..m {
                    res[i] -= a[(i, j)] * xj;
                }
            }
        }
        let dx = self.solve(&res);
        for i in 0..m {
            x[i] += dx[i];
        }
        x
    }
}

fn ipm(p: &SdpProblem, s: &SdpSettings) -> Result<SdpSolution> {
    let n: usize = p.n();
    let m = p.m();
    let c = p.c_matrix();
    let layout = Layout::new(p);
    let nb = p.blocks.len();
    // starting point scaled to the data
    let mut amax: f64 = 1.0;
    let mut row_norm = vec![0.0f64; m];
    for e in &p.entries {
        let w = if e.i == e.j { 1.0 } else { 2.0 };
        row_norm[e.row] += w * e.v * e.v;
    }
    for r in &row_norm {
        amax = amax.max(r.sqrt());
    }
    let mut xi: f64 = 10.0;
    for (i, r) in row_norm.iter().enumerate() {
        if *r > 0.0 {
            xi = xi.max(10.0 * (1.0 + p.rhs[i].abs()) / (1.0 + r.sqrt()));
        }
    }
    let eta = 10.0 * (1.0 + fro(&c)).max(amax);
    let ident = |v: f64| -> Vec<Mat<f64>> {
        p.blocks.iter().map(|&s| Mat::from_fn(s, s, |i, j| if i == j { v } else { 0.0 })).collect()
    };
    let mut it = Iterate { x: ident(xi), y: vec![0.0; m], z: ident(eta) };
    let bnorm = 1.0 + norm(&p.rhs);
    let cnorm = 1.0 + fro(&c);
    let mut status = SdpStatus::MaxIter;
    let mut message = String::new();
    let mut iters = 0;
    for k in 0..s.max_iter {
        iters = k;
        let (rp, rd) = residuals(p, &c, &it);
        let mu = dot(&it.x, &it.z) / n as f64;
        let pobj = dot(&c, &it.x);
        let dobj: f64 = p.rhs.iter().zip(&it.y).map(|(b, y)| b * y).sum();
        let pres = norm(&rp) / bnorm;
        let dres = fro(&rd) / cnorm;
        let gap = ((pobj - dobj).abs() + n as f64 * mu) / (1.0 + pobj.abs() + dobj.abs());
        if s.verbose {
            eprintln!("{k:3} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} mu {mu:.2e}");
        }
        if pres <= s.tol && dres <= s.tol && gap <= s.tol {
            status = SdpStatus::Feasible;
            break;
        }
        // with no objective any interior point meeting the constraints will do
        if (p.objective.is_empty() || s.stop_at_feasible) && pres <= s.tol {
            status = SdpStatus::Feasible;
            break;
        }
        // Farkas ray: bᵀy > 0 with −𝒜*(y) ⪰ 0 proves primal infeasibility
        if dobj > 0.0 && p.objective.is_empty() {
            let aty = p.apply_adjoint(&it.y);
            let scale = fro(&aty).max(1e-300);
            let neg: Vec<Mat<f64>> = aty.iter().map(|a| a * (-1.0 / scale)).collect();
            let worst = neg.iter().map(min_eig).fold(f64::INFINITY, f64::min);
            if dobj / scale > 1e2 * s.tol.sqrt() && worst >= -s.tol {
                status = SdpStatus::InfeasibleCertificate;
                message = format!("dual ray: bᵀy/‖𝒜*y‖ = {:.3e}", dobj / scale);
                break;
            }
        }
        let mut zinv = Vec::with_capacity(nb);
        for z in &it.z {
            match z.llt(Side::Lower) {
                Ok(l) => zinv.push(l.inverse()),
                Err(_) => {
                    status = SdpStatus::NumericalFailure;
                    message = format!("Z lost definiteness (min eig {:.3e})", min_eig(z));
                    break;
                }
            }
        }
        if zinv.len() < nb {
            break;
        }
        let schur = layout.schur(m, &it.x, &zinv);
        let Some(chol) = PivChol::new(&schur, 1e-14) else {
            status = SdpStatus::NumericalFailure;
            let d = (0..m).map(|i| schur[(i, i)]).fold(f64::INFINITY, f64::min);
            message = format!("Schur complement not positive definite (smallest diagonal {d:.3e})");
            break;
        };
        // direction for a given centering target and corrector term
        let direction = |sigma: f64, corr: Option<&[Mat<f64>]>| -> (Vec<Mat<f64>>, Vec<f64>, Vec<Mat<f64>>) {
            // dX = σμ Z⁻¹ − X − corr Z⁻¹ − X dZ Z⁻¹ with dZ = Rd − 𝒜*(dy)
            let base: Vec<Mat<f64>> = (0..nb)
                .map(|b| {
                    let mut w = &zinv[b] * (sigma * mu) - &it.x[b];
                    if let Some(cr) = corr {
                        w -= &cr[b] * &zinv[b];
                    }
                    w
                })
                .collect();
            let w: Vec<Mat<f64>> = (0..nb).map(|b| &base[b] - &it.x[b] * &rd[b] * &zinv[b]).collect();
            let aw = p.apply(&w);
            let rhs: Vec<f64> = (0..m).map(|i| rp[i] - aw[i]).collect();
            let dy = chol.solve_refined(&schur, &rhs);
            let aty = p.apply_adjoint(&dy);
            let dz: Vec<Mat<f64>> = (0..nb).map(|b| &rd[b] - &aty[b]).collect();
            let dx: Vec<Mat<f64>> = (0..nb).map(|b| sym(&(&base[b] - &it.x[b] * &dz[b] * &zinv[b]))).collect();
            (dx, dy, dz)
        };
        let steps = |dx: &[Mat<f64>], dz: &[Mat<f64>]| -> Option<(f64, f64)> {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for b in 0..nb {
                ap = ap.min(max_step(&it.x[b], &dx[b])?);
                ad = ad.min(max_step(&it.z[b], &dz[b])?);
            }
            Some((ap, ad))
        };
        let (dxa, _dya, dza) = direction(0.0, None);
        let Some((apa, ada)) = steps(&dxa, &dza) else {
            status = SdpStatus::NumericalFailure;
            message = "step length: iterate lost definiteness".into();
            break;
        };
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let xa: Vec<Mat<f64>> = (0..nb).map(|b| &it.x[b] + &dxa[b] * apa).collect();
        let za: Vec<Mat<f64>> = (0..nb).map(|b| &it.z[b] + &dza[b] * ada).collect();
        let mu_aff = dot(&xa, &za) / n as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let corr: Vec<Mat<f64>> = (0..nb).map(|b| &dxa[b] * &dza[b]).collect();
        let (dx, dy, dz) = direction(sigma, Some(&corr));
        let Some((ap, ad)) = steps(&dx, &dz) else {
            status = SdpStatus::NumericalFailure;
            message = "step length: iterate lost definiteness".into();
            break;
        };
        let tau = 0.95;
        let (ap, ad) = ((tau * ap).min(1.0), (tau * ad).min(1.0));
        if ap < 1e-12 && ad < 1e-12 {
            status = SdpStatus::NumericalFailure;
            message = format!("stalled: step lengths {ap:.2e}/{ad:.2e}");
            break;
        }
        for b in 0..nb {
            it.x[b] = sym(&(&it.x[b] + &dx[b] * ap));
            it.z[b] = sym(&(&it.z[b] + &dz[b] * ad));
        }
        for i in 0..m {
            it.y[i] += ad * dy[i];
        }
        iters = k + 1;
    }
    let (pr, dr, gap) = measure(p, &it.x, &it.y, &it.z);
    let min_eig_x = it.x.iter().map(min_eig).fold(f64::INFINITY, f64::min);
    if status == SdpStatus::MaxIter && message.is_empty() {
        message = format!("iteration limit {} reached", s.max_iter);
    }
    Ok(SdpSolution { status, x: it.x, y: it.y, z: it.z, primal_res: pr, dual_res: dr, gap, iters, min_eig_x, message })
}

// ---------------------------------------------------------------------------
// SDPA sparse format.
//
// Our primal is SDPA's dual: `F_i = A_i`, `c_i = b_i`, and `F_0 = −C` (SDPA
// maximizes ⟨F_0, Y⟩).

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the problem in SDPA sparse format (`.dat-s`).
pub fn write_sdpa(p: &SdpProblem) -> String {
    let mut s = String::new();
    writeln!(s, "{}", p.m()).unwrap();
    writeln!(s, "{}", p.blocks.len()).unwrap();
    writeln!(s, "{}", p.blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
    writeln!(s, "{}", p.rhs.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(" ")).unwrap();
    for e in &p.objective {
        writeln!(s, "0 {} {} {} {}", e.block + 1, e.i + 1, e.j + 1, fmt17(-e.v)).unwrap();
    }
    for e in &p.entries {
        writeln!(s, "{} {} {} {} {}", e.row + 1, e.block + 1, e.i + 1, e.j + 1, fmt17(e.v)).unwrap();
    }
    s
}

fn sdpa_tokens(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split(['"', '*']).next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')')) {
            if !tok.is_empty() {
                out.push((ln + 1, tok.to_string()));
            }
        }
    }
    out
}

/// Parse an SDPA sparse file.
pub fn read_sdpa(text: &str) -> Result<SdpProblem> {
    let toks = sdpa_tokens(text);
    let mut it = toks.into_iter();
    fn take(it: &mut impl Iterator<Item = (usize, String)>, what: &str) -> Result<(usize, String)> {
        it.next().ok_or_else(|| Error::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") })
    }
    let int = |(l, t): (usize, String)| -> Result<i64> {
        t.parse::<i64>().map_err(|_| Error::Parse { line: l, msg: format!("expected integer, got '{t}'") })
    };
    let flt = |(l, t): (usize, String)| -> Result<f64> {
        t.parse::<f64>().map_err(|_| Error::Parse { line: l, msg: format!("expected number, got '{t}'") })
    };
    let m = int(take(&mut it, "m")?)? as usize;
    let nblocks = int(take(&mut it, "nblocks")?)? as usize;
    let mut blocks = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let b = int(take(&mut it, "block size")?)?;
        if b <= 0 {
            return Err(Error::Unsupported("SDPA diagonal (negative) blocks".into()));
        }
        blocks.push(b as usize);
    }
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        rhs.push(flt(take(&mut it, "c vector")?)?);
    }
    let mut p = SdpProblem { blocks, entries: Vec::new(), rhs, objective: Vec::new() };
    loop {
        let Some(first) = it.next() else { break };
        let line = first.0;
        let mat = int(first)?;
        let blk = int(take(&mut it, "block")?)?;
        let i = int(take(&mut it, "i")?)?;
        let j = int(take(&mut it, "j")?)?;
        let v = flt(take(&mut it, "value")?)?;
        if blk < 1 || i < 1 || j < 1 || mat < 0 || mat as usize > m {
            return Err(Error::Parse { line, msg: "entry index out of range".into() });
        }
        let (b, i, j) = ((blk - 1) as usize, (i.min(j) - 1) as usize, (i.max(j) - 1) as usize);
        if mat == 0 {
            p.objective.push(CEntry { block: b, i, j, v: -v });
        } else {
            p.entries.push(Entry { row: mat as usize - 1, block: b, i, j, v });
        }
    }
    p.check()?;
    Ok(p)
}

/// Write a solution in the CSDP/SDPA solution layout: the `y` vector on the
/// first line, then `1 blk i j v` for `Z` and `2 blk i j v` for `X`.
pub fn write_solution(sol: &SdpSolution) -> String {
    let mut s = String::new();
    writeln!(s, "{}", sol.y.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(" ")).unwrap();
    for (mat, blocks) in [(1, &sol.z), (2, &sol.x)] {
        for (b, m) in blocks.iter().enumerate() {
            for j in 0..m.ncols() {
                for i in 0..=j {
                    let v = m[(i, j)];
                    if v != 0.0 {
                        writeln!(s, "{mat} {} {} {} {}", b + 1, i + 1, j + 1, fmt17(v)).unwrap();
                    }
                }
            }
        }
    }
    s
}

/// Read a solution written by [`write_solution`] (or CSDP) for the given problem.
/// Residuals are recomputed from the matrices.
pub fn read_solution(p: &SdpProblem, text: &str) -> Result<SdpSolution> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, yl) = lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "empty solution file".into() })?;
    let y: Vec<f64> = yl
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse { line: 1, msg: format!("bad y entry '{t}'") }))
        .collect::<Result<_>>()?;
    if y.len() != p.m() {
        return Err(Error::Dim(format!("solution has {} multipliers, problem has {} rows", y.len(), p.m())));
    }
    let mut x: Vec<Mat<f64>> = p.blocks.iter().map(|&s| Mat::zeros(s, s)).collect();
    let mut z = x.clone();
    for (ln, l) in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        let bad = || Error::Parse { line: ln + 1, msg: format!("bad solution entry '{l}'") };
        if t.len() != 5 {
            return Err(bad());
        }
        let mat: usize = t[0].parse().map_err(|_| bad())?;
        let b: usize = t[1].parse().map_err(|_| bad())?;
        let i: usize = t[2].parse().map_err(|_| bad())?;
        let j: usize = t[3].parse().map_err(|_| bad())?;
        let v: f64 = t[4].parse().map_err(|_| bad())?;
        if b == 0 || b > p.blocks.len() || i == 0 || j == 0 || i.max(j) > p.blocks[b - 1] {
            return Err(bad());
        }
        let target = match mat {
            1 => &mut z,
            2 => &mut x,
            _ => return Err(bad()),
        };
        target[b - 1][(i - 1, j - 1)] = v;
        target[b - 1][(j - 1, i - 1)] = v;
    }
    let (pr, dr, gap) = measure(p, &x, &y, &z);
    let min_eig_x = x.iter().map(min_eig).fold(f64::INFINITY, f64::min);
    Ok(SdpSolution {
        status: if pr <= 1e-8 && min_eig_x >= -1e-9 { SdpStatus::Feasible } else { SdpStatus::NumericalFailure },
        x,
        y,
        z,
        primal_res: pr,
        dual_res: dr,
        gap,
        iters: 0,
        min_eig_x,
        message: "imported".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e(row: usize, block: usize, i: usize, j: usize, v: f64) -> Entry {
        Entry { row, block, i, j, v }
    }

    #[test]
    fn trace_minimization() {
        let p = SdpProblem {
            blocks: vec![2],
            entries: vec![e(0, 0, 0, 0, 1.0)],
            rhs: vec![1.0],
            objective: vec![CEntry { block: 0, i: 0, j: 0, v: 1.0 }, CEntry { block: 0, i: 1, j: 1, v: 1.0 }],
        };
        let s = solve_sdp(&p, &SdpSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Feasible, "{}", s.message);
        assert!((s.x[0][(0, 0)] - 1.0).abs() < 1e-7);
        assert!(s.x[0][(1, 1)].abs() < 1e-7 && s.x[0][(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn contradictory_rows_rejected() {
        let p = SdpProblem {
            blocks: vec![2],
            entries: vec![e(0, 0, 0, 0, 1.0), e(1, 0, 0, 0, 1.0)],
            rhs: vec![1.0, 2.0],
            objective: vec![],
        };
        assert!(matches!(presolve(&p), Err(Error::Sdp(_))));
    }

    #[test]
    fn random_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let blocks = vec![4, 3];
        let x0: Vec<Mat<f64>> = blocks
            .iter()
            .map(|&s| {
                let g = Mat::from_fn(s, s, |_, _| rng.gen_range(-1.0..1.0));
                &g * g.transpose()
            })
            .collect();
        let mut entries = Vec::new();
        let m = 8;
        for r in 0..m {
            for (b, &s) in blocks.iter().enumerate() {
                for j in 0..s {
                    for i in 0..=j {
                        if rng.gen_bool(0.4) {
                            entries.push(e(r, b, i, j, rng.gen_range(-1.0..1.0)));
                        }
                    }
                }
            }
        }
        let mut p = SdpProblem { blocks, entries, rhs: vec![0.0; m], objective: vec![] };
        p.rhs = p.apply(&x0);
        let s = solve_sdp(&p, &SdpSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Feasible, "{}", s.message);
        assert!(s.primal_res <= 1e-8);
    }

    #[test]
    fn trivial_rows_are_dropped() {
        let p = SdpProblem {
            blocks: vec![1],
            entries: vec![e(1, 0, 0, 0, 2.0)],
            rhs: vec![0.0, 1.0],
            objective: vec![CEntry { block: 0, i: 0, j: 0, v: 1.0 }],
        };
        let s = solve_sdp(&p, &SdpSettings::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Feasible, "{}", s.message);
        assert!((s.x[0][(0, 0)] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn sdpa_round_trip() {
        let p = SdpProblem {
            blocks: vec![2, 1],
            entries: vec![e(0, 0, 0, 1, 0.1), e(1, 1, 0, 0, std::f64::consts::PI)],
            rhs: vec![1.0 / 3.0, 2.0],
            objective: vec![CEntry { block: 0, i: 0, j: 0, v: 1.5 }],
        };
        assert_eq!(read_sdpa(&write_sdpa(&p)).unwrap(), p);
    }
}
