//! Standardized PDE model, file format and boundary trace maps.
//!
//! A PDE is given by constant coefficient matrices `A_ij` acting as
//!
//! ```text
//! u_t = Σ_{i,j=0..2} A_ij ∂x^i ∂y^j (N_max(i,j) u)
//! ```
//!
//! where the state `u = (u0, u1, u2)` is split by differentiability and the
//! boundary conditions are `B Λ_bf u = 0` for a 011 operator `B`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num::{One, Zero};

use crate::error::{Error, Result};
use crate::op::{embed_011, N011};
use crate::poly::{parse_rat, Poly, PolyMat, Rat, Rect, Var};
use crate::ratmat::RatMat;

/// Column counts of `N0`, `N1`, `N2`.
pub fn n_cols(k: usize, n0: usize, n1: usize, n2: usize) -> usize {
    match k {
        0 => n0 + n1 + n2,
        1 => n1 + n2,
        _ => n2,
    }
}

/// The selector `N_k` as a constant matrix.
pub fn n_matrix(k: usize, n0: usize, n1: usize, n2: usize) -> RatMat {
    let n = n0 + n1 + n2;
    let c = n_cols(k, n0, n1, n2);
    RatMat::from_fn(c, n, |i, j| if j == n - c + i { Rat::one() } else { Rat::zero() })
}

/// ODE coupled to the PDE through a point value of the PDE state:
/// `Ẋ = (A + B K) X + B u(at)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeCoupling {
    pub n: usize,
    pub a: RatMat,
    pub b: RatMat,
    pub k: RatMat,
    /// evaluation point, must be a corner of the domain
    pub at: (Rat, Rat),
}

impl OdeCoupling {
    pub fn closed_loop(&self) -> RatMat {
        self.a.add(&self.b.mul(&self.k))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeSpec {
    pub rect: Rect,
    pub n0: usize,
    pub n1: usize,
    pub n2: usize,
    /// `a[i][j]` multiplies `∂x^i ∂y^j N_max(i,j) u`
    pub a: [[Option<RatMat>; 3]; 3],
    pub b: N011,
    /// the constant matrix `b` was embedded from, kept for serialization
    pub b_matrix: Option<RatMat>,
    pub ode: Option<OdeCoupling>,
}

impl PdeSpec {
    pub fn n(&self) -> usize {
        self.n0 + self.n1 + self.n2
    }
    /// `(rows, cols)` of the boundary operator: `((n1+4n2, n1+2n2), (4n1+16n2, 2n1+4n2))`.
    pub fn b_signature(n1: usize, n2: usize) -> ((usize, usize), (usize, usize)) {
        ((n1 + 4 * n2, n1 + 2 * n2), (4 * n1 + 16 * n2, 2 * n1 + 4 * n2))
    }

    /// Build a spec from a constant boundary matrix in `Λ_bf` column order.
    pub fn new(
        rect: Rect,
        (n0, n1, n2): (usize, usize, usize),
        a: [[Option<RatMat>; 3]; 3],
        b: RatMat,
    ) -> Result<Self> {
        let ((r0, r1), (c0, c1)) = PdeSpec::b_signature(n1, n2);
        if b.rows != r0 + 2 * r1 || b.cols != c0 + 2 * c1 {
            return Err(Error::Dim(format!(
                "boundary matrix must be {}x{}, got {}x{}",
                r0 + 2 * r1,
                c0 + 2 * c1,
                b.rows,
                b.cols
            )));
        }
        let bop = embed_011(&b.to_polymat(), (r0, r1), (c0, c1), &rect)
            .map_err(|e| Error::Op(format!("boundary matrix is not block diagonal: {e}")))?;
        let s = PdeSpec { rect, n0, n1, n2, a, b: bop, b_matrix: Some(b), ode: None };
        s.check()?;
        Ok(s)
    }

    /// Dimension checks on the dynamics.
    pub fn check(&self) -> Result<()> {
        let n = self.n();
        for i in 0..3 {
            for j in 0..3 {
                if let Some(m) = &self.a[i][j] {
                    let c = n_cols(i.max(j), self.n0, self.n1, self.n2);
                    if m.rows != n || m.cols != c {
                        return Err(Error::Dim(format!("A{i}{j} must be {n}x{c}, got {}x{}", m.rows, m.cols)));
                    }
                }
            }
        }
        let ((r0, r1), (c0, c1)) = PdeSpec::b_signature(self.n1, self.n2);
        if self.b.signature() != ((r0, r1), (c0, c1)) {
            return Err(Error::Dim("boundary operator signature".into()));
        }
        if let Some(o) = &self.ode {
            let m = n;
            if o.a.rows != o.n || o.a.cols != o.n || o.b.rows != o.n || o.b.cols != m || o.k.rows != m || o.k.cols != o.n {
                return Err(Error::Dim(format!("ODE matrices must be A {0}x{0}, B {0}x{1}, K {1}x{0}", o.n, m)));
            }
            let r = &self.rect;
            if !((o.at.0 == r.a || o.at.0 == r.b) && (o.at.1 == r.c || o.at.1 == r.d)) {
                return Err(Error::Unsupported("ODE readout point must be a corner of the domain".into()));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Boundary orderings.

const CORNERS: [&str; 4] = ["(a,c)", "(b,c)", "(a,d)", "(b,d)"];

/// Labels of the rows of `Λ_bf u`: scalar block, then x-edge and y-edge functions.
pub fn bf_labels(n1: usize, n2: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut r = Vec::new();
    let groups: [(&str, usize); 5] = [("u1", n1), ("u2", n2), ("u2_x", n2), ("u2_y", n2), ("u2_xy", n2)];
    for (name, n) in groups {
        for c in CORNERS {
            for k in 0..n {
                r.push(format!("{name}[{k}]{c}"));
            }
        }
    }
    let edge = |groups: [(&str, usize); 3], ends: [&str; 2]| {
        let mut v = Vec::new();
        for (name, n) in groups {
            for e in ends {
                for k in 0..n {
                    v.push(format!("{name}[{k}]{e}"));
                }
            }
        }
        v
    };
    let x = edge([("u1_x", n1), ("u2_xx", n2), ("u2_xxy", n2)], ["(x,c)", "(x,d)"]);
    let y = edge([("u1_y", n1), ("u2_yy", n2), ("u2_xyy", n2)], ["(a,y)", "(b,y)"]);
    (r, x, y)
}

/// Labels of the rows of `Λ_bc u`.
pub fn bc_labels(n1: usize, n2: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
    let rep = |name: &str, n: usize, at: &str| (0..n).map(|k| format!("{name}[{k}]{at}")).collect::<Vec<_>>();
    let mut r = rep("u1", n1, "(a,c)");
    for g in ["u2", "u2_x", "u2_y", "u2_xy"] {
        r.extend(rep(g, n2, "(a,c)"));
    }
    let mut x = rep("u1_x", n1, "(x,c)");
    x.extend(rep("u2_xx", n2, "(x,c)"));
    x.extend(rep("u2_xxy", n2, "(x,c)"));
    let mut y = rep("u1_y", n1, "(a,y)");
    y.extend(rep("u2_yy", n2, "(a,y)"));
    y.extend(rep("u2_xyy", n2, "(a,y)"));
    (r, x, y)
}

/// Symbolic PDE state `(u0, u1, u2)`: column vectors of polynomials in `x, y`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicState {
    pub u: [PolyMat; 3],
}

/// Boundary values: constants, functions of `x`, functions of `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTuple {
    pub r: PolyMat,
    pub x: PolyMat,
    pub y: PolyMat,
}

fn dpow(p: &PolyMat, i: usize, j: usize) -> PolyMat {
    let mut r = p.clone();
    for _ in 0..i {
        r = r.diff(Var::X);
    }
    for _ in 0..j {
        r = r.diff(Var::Y);
    }
    r
}

fn at(p: &PolyMat, x: Option<&Rat>, y: Option<&Rat>) -> PolyMat {
    let mut r = p.clone();
    if let Some(x) = x {
        r = r.subst_const(Var::X, x);
    }
    if let Some(y) = y {
        r = r.subst_const(Var::Y, y);
    }
    r
}

fn corners(r: &Rect) -> [(Rat, Rat); 4] {
    [
        (r.a.clone(), r.c.clone()),
        (r.b.clone(), r.c.clone()),
        (r.a.clone(), r.d.clone()),
        (r.b.clone(), r.d.clone()),
    ]
}

/// `Λ_bf u`: all boundary values admitted by the differentiability split.
pub fn apply_lambda_bf(u: &SymbolicState, rect: &Rect) -> BoundaryTuple {
    let [_, u1, u2] = &u.u;
    let mut r = Vec::new();
    for (f, i, j) in [(u1, 0, 0), (u2, 0, 0), (u2, 1, 0), (u2, 0, 1), (u2, 1, 1)] {
        let g = dpow(f, i, j);
        for (cx, cy) in corners(rect) {
            r.push(at(&g, Some(&cx), Some(&cy)));
        }
    }
    let mut x = Vec::new();
    for (f, i, j) in [(u1, 1, 0), (u2, 2, 0), (u2, 2, 1)] {
        let g = dpow(f, i, j);
        for e in [&rect.c, &rect.d] {
            x.push(at(&g, None, Some(e)));
        }
    }
    let mut y = Vec::new();
    for (f, i, j) in [(u1, 0, 1), (u2, 0, 2), (u2, 1, 2)] {
        let g = dpow(f, i, j);
        for e in [&rect.a, &rect.b] {
            y.push(at(&g, Some(e), None));
        }
    }
    BoundaryTuple { r: PolyMat::vstack(&r), x: PolyMat::vstack(&x), y: PolyMat::vstack(&y) }
}

/// `Λ_bc u`: the core corner and edge values at `(a, c)`.
pub fn apply_lambda_bc(u: &SymbolicState, rect: &Rect) -> BoundaryTuple {
    let [_, u1, u2] = &u.u;
    let (a, c) = (&rect.a, &rect.c);
    let r: Vec<PolyMat> = [(u1, 0, 0), (u2, 0, 0), (u2, 1, 0), (u2, 0, 1), (u2, 1, 1)]
        .iter()
        .map(|&(f, i, j)| at(&dpow(f, i, j), Some(a), Some(c)))
        .collect();
    let x: Vec<PolyMat> =
        [(u1, 1, 0), (u2, 2, 0), (u2, 2, 1)].iter().map(|&(f, i, j)| at(&dpow(f, i, j), None, Some(c))).collect();
    let y: Vec<PolyMat> =
        [(u1, 0, 1), (u2, 0, 2), (u2, 1, 2)].iter().map(|&(f, i, j)| at(&dpow(f, i, j), Some(a), None)).collect();
    BoundaryTuple { r: PolyMat::vstack(&r), x: PolyMat::vstack(&x), y: PolyMat::vstack(&y) }
}

/// `𝒟u = (u0, ∂x∂y u1, ∂x²∂y² u2)` stacked.
pub fn apply_d(u: &SymbolicState) -> PolyMat {
    PolyMat::vstack(&[u.u[0].clone(), dpow(&u.u[1], 1, 1), dpow(&u.u[2], 2, 2)])
}

/// Split a stacked state into `(u0, u1, u2)`.
pub fn split_state(u: &PolyMat, n0: usize, n1: usize, n2: usize) -> SymbolicState {
    SymbolicState { u: [u.submatrix(0, n0, 0, 1), u.submatrix(n0, n1, 0, 1), u.submatrix(n0 + n1, n2, 0, 1)] }
}

// ---------------------------------------------------------------------------
// File format.

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Substitute `{name}` placeholders.
pub fn instantiate(text: &str, params: &[(&str, &str)]) -> String {
    let mut s = text.to_string();
    for (k, v) in params {
        s = s.replace(&format!("{{{k}}}"), v);
    }
    s
}

/// Names of `{name}` placeholders in a template.
pub fn template_params(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(i) = rest.find('{') {
        let Some(j) = rest[i..].find('}') else { break };
        let name = &rest[i + 1..i + j];
        if !name.is_empty() && !out.iter().any(|n| n == name) {
            out.push(name.to_string());
        }
        rest = &rest[i + j + 1..];
    }
    out
}

fn parse_vals(s: &str, line: usize) -> Result<Vec<Rat>> {
    s.split_whitespace()
        .map(|t| parse_rat(t).ok_or_else(|| perr(line, format!("not a number: {t:?}"))))
        .collect()
}

fn parse_matrix(s: &str, line: usize) -> Result<RatMat> {
    let rows: Vec<Vec<Rat>> = s.split(';').map(|r| parse_vals(r, line)).collect::<Result<_>>()?;
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(perr(line, "matrix rows must be non-empty and of equal length"));
    }
    Ok(RatMat::from_fn(rows.len(), cols, |i, j| rows[i][j].clone()))
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| perr(line, format!("expected a non-negative integer, got {s:?}")))
}

/// Parse the PDE file format.
pub fn parse_pde(text: &str) -> Result<PdeSpec> {
    if let Some(p) = template_params(text).first() {
        return Err(perr(0, format!("unresolved template parameter {{{p}}}")));
    }
    let mut section = String::new();
    let mut dom: BTreeMap<String, (Rat, Rat, usize)> = BTreeMap::new();
    let mut states: BTreeMap<String, usize> = BTreeMap::new();
    let mut dynamics: Vec<(usize, usize, RatMat, usize)> = Vec::new();
    let mut bc_rows: Vec<(Vec<Rat>, usize)> = Vec::new();
    let mut ode: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(perr(ln, "unterminated section header"));
            }
            section = line[1..line.len() - 1].trim().to_string();
            if !["domain", "states", "dynamics", "bc", "ode"].contains(&section.as_str()) {
                return Err(perr(ln, format!("unknown section [{section}]")));
            }
            continue;
        }
        let (key, val) = line.split_once('=').ok_or_else(|| perr(ln, "expected `key = value`"))?;
        let (key, val) = (key.trim(), val.trim());
        match section.as_str() {
            "domain" => {
                let v = parse_vals(val, ln)?;
                if v.len() != 2 || !(key == "x" || key == "y") {
                    return Err(perr(ln, "domain lines are `x = a b` or `y = c d`"));
                }
                dom.insert(key.into(), (v[0].clone(), v[1].clone(), ln));
            }
            "states" => {
                if !["n0", "n1", "n2"].contains(&key) {
                    return Err(perr(ln, format!("unknown state group {key}")));
                }
                states.insert(key.into(), parse_usize(val, ln)?);
            }
            "dynamics" => {
                let b = key.as_bytes();
                if b.len() != 3 || b[0] != b'A' || !(b'0'..=b'2').contains(&b[1]) || !(b'0'..=b'2').contains(&b[2]) {
                    return Err(perr(ln, format!("unknown coefficient {key}; expected A00..A22")));
                }
                dynamics.push(((b[1] - b'0') as usize, (b[2] - b'0') as usize, parse_matrix(val, ln)?, ln));
            }
            "bc" => {
                if key != "row" {
                    return Err(perr(ln, "boundary lines are `row = ...`"));
                }
                bc_rows.push((parse_vals(val, ln)?, ln));
            }
            "ode" => {
                ode.insert(key.into(), (val.into(), ln));
            }
            _ => return Err(perr(ln, "content outside a section")),
        }
    }
    let (a, b, lx) = dom.get("x").cloned().ok_or_else(|| perr(0, "missing `x = a b` in [domain]"))?;
    let (c, d, ly) = dom.get("y").cloned().ok_or_else(|| perr(0, "missing `y = c d` in [domain]"))?;
    let bad = if a >= b { lx } else { ly };
    let rect = Rect::new(a, b, c, d).map_err(|e| perr(bad, e.to_string()))?;
    let g = |k: &str| states.get(k).copied().unwrap_or(0);
    let (n0, n1, n2) = (g("n0"), g("n1"), g("n2"));
    let n = n0 + n1 + n2;
    if n == 0 {
        return Err(perr(0, "no states declared"));
    }
    let mut am: [[Option<RatMat>; 3]; 3] = Default::default();
    for (i, j, m, ln) in dynamics {
        let cols = n_cols(i.max(j), n0, n1, n2);
        if m.rows != n || m.cols != cols {
            return Err(perr(ln, format!("A{i}{j} must be {n}x{cols}, got {}x{}", m.rows, m.cols)));
        }
        if am[i][j].is_some() {
            return Err(perr(ln, format!("A{i}{j} given twice")));
        }
        am[i][j] = Some(m);
    }
    let ((r0, r1), (c0, c1)) = PdeSpec::b_signature(n1, n2);
    let (br, bc) = (r0 + 2 * r1, c0 + 2 * c1);
    if bc_rows.len() != br {
        return Err(perr(
            bc_rows.last().map(|r| r.1).unwrap_or(0),
            format!("[bc] needs {br} rows, got {}", bc_rows.len()),
        ));
    }
    for (r, ln) in &bc_rows {
        if r.len() != bc {
            return Err(perr(*ln, format!("[bc] rows need {bc} entries, got {}", r.len())));
        }
    }
    let bm = RatMat::from_fn(br, bc, |i, j| bc_rows[i].0[j].clone());
    let first_bc = bc_rows.first().map(|r| r.1).unwrap_or(0);
    let mut spec = PdeSpec::new(rect, (n0, n1, n2), am, bm).map_err(|e| perr(first_bc, e.to_string()))?;
    if !ode.is_empty() {
        let get = |k: &str| ode.get(k).ok_or_else(|| perr(0, format!("[ode] is missing `{k}`")));
        let (nv, nl) = get("n")?;
        let no = parse_usize(nv, *nl)?;
        let mat = |k: &str| -> Result<RatMat> {
            let (v, l) = get(k)?;
            parse_matrix(v, *l)
        };
        let (atv, atl) = get("at")?;
        let p = parse_vals(atv, *atl)?;
        if p.len() != 2 {
            return Err(perr(*atl, "`at = x y` needs two coordinates"));
        }
        spec.ode = Some(OdeCoupling { n: no, a: mat("A")?, b: mat("B")?, k: mat("K")?, at: (p[0].clone(), p[1].clone()) });
        spec.check().map_err(|e| perr(*nl, e.to_string()))?;
    }
    Ok(spec)
}

fn fmt_mat(m: &RatMat) -> String {
    (0..m.rows)
        .map(|i| (0..m.cols).map(|j| m.get(i, j).to_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Serialize back to the file format. Requires the boundary operator to come from a matrix.
pub fn serialize_pde(s: &PdeSpec) -> Result<String> {
    let bm = s
        .b_matrix
        .as_ref()
        .ok_or_else(|| Error::Unsupported("boundary operator without a matrix form cannot be written".into()))?;
    let mut o = String::new();
    let r = &s.rect;
    writeln!(o, "[domain]\nx = {} {}\ny = {} {}", r.a, r.b, r.c, r.d).unwrap();
    writeln!(o, "[states]\nn0 = {}\nn1 = {}\nn2 = {}", s.n0, s.n1, s.n2).unwrap();
    writeln!(o, "[dynamics]").unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if let Some(m) = &s.a[i][j] {
                writeln!(o, "A{i}{j} = {}", fmt_mat(m)).unwrap();
            }
        }
    }
    writeln!(o, "[bc]").unwrap();
    for i in 0..bm.rows {
        let row: Vec<String> = (0..bm.cols).map(|j| bm.get(i, j).to_string()).collect();
        writeln!(o, "row = {}", row.join(" ")).unwrap();
    }
    if let Some(od) = &s.ode {
        writeln!(o, "[ode]\nn = {}\nA = {}\nB = {}\nK = {}\nat = {} {}", od.n, fmt_mat(&od.a), fmt_mat(&od.b), fmt_mat(&od.k), od.at.0, od.at.1)
            .unwrap();
    }
    Ok(o)
}

/// Read a PDE file, filling `{name}` placeholders from `params`.
pub fn load_pde(path: &std::path::Path, params: &[(&str, &str)]) -> Result<PdeSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_pde(&instantiate(&text, params))
}

/// Residual `B Λ_bf u` of a symbolic state; zero iff `u` satisfies the boundary conditions.
pub fn bc_residual(spec: &PdeSpec, u: &SymbolicState) -> Result<BoundaryTuple> {
    let bf = apply_lambda_bf(u, &spec.rect);
    let f = crate::op::function_op(
        [bf.r.clone(), bf.x.clone(), bf.y.clone(), PolyMat::zeros(0, 1)],
        &spec.rect,
    )?;
    let bop = spec.b.to_op(&spec.rect)?;
    let r = bop.compose(&f)?;
    use crate::op::{Comp, Ty};
    Ok(BoundaryTuple {
        r: r.kernel(Comp::R, Comp::R, Ty::C, Ty::C),
        x: r.kernel(Comp::X, Comp::R, Ty::B, Ty::C),
        y: r.kernel(Comp::Y, Comp::R, Ty::C, Ty::B),
    })
}

/// A polynomial column vector from coefficients, for tests and examples.
pub fn poly_col(ps: Vec<Poly>) -> PolyMat {
    let n = ps.len();
    let mut m = PolyMat::zeros(n, 1);
    for (i, p) in ps.into_iter().enumerate() {
        m.set(i, 0, p);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat;

    pub(crate) const HEAT: &str = "\
[domain]
x = 0 1
y = 0 1
[states]
n2 = 1
[dynamics]
A20 = 1
A02 = 1
[bc]
row = 0 1 0 0  0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0
row = 0 0 0 0  1 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0
row = 0 0 0 0  0 0 0 0  0 0 1 0  0 0 0 0  0 0 0 0  0 0 0 0
row = 0 0 0 0  0 0 0 0  0 0 0 0  1 0 0 0  0 0 0 0  0 0 0 0
row = 0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  1 0 0 0  0 0 0 0
row = 0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  0 0 1 0  0 0 0 0
row = 0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  1 0 0 0
row = 0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  0 0 0 0  0 0 1 0
";

    #[test]
    fn parse_heat_and_roundtrip() {
        let s = parse_pde(HEAT).unwrap();
        assert_eq!((s.n0, s.n1, s.n2), (0, 0, 1));
        assert_eq!(s.a[2][0].as_ref().unwrap().get(0, 0), &rat(1, 1));
        assert_eq!(s.b.b00.rows, 4);
        assert_eq!(s.b.b00.cols, 16);
        let again = parse_pde(&serialize_pde(&s).unwrap()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let bad = HEAT.replace("x = 0 1", "x = 1 0");
        assert!(matches!(parse_pde(&bad), Err(Error::Parse { line: 2, .. })));
        let bad = HEAT.replace("A02 = 1", "A02 = 1 2");
        assert!(matches!(parse_pde(&bad), Err(Error::Parse { line: 8, .. })));
        let bad = HEAT.replace("A02 = 1", "A02 = {r}");
        assert!(parse_pde(&bad).is_err());
        assert_eq!(template_params(&bad), vec!["r".to_string()]);
        assert!(parse_pde(&instantiate(&bad, &[("r", "2.5")])).is_ok());
    }

    #[test]
    fn lambda_maps_on_monomials() {
        let r = Rect::unit();
        let x = Poly::var(Var::X);
        let y = Poly::var(Var::Y);
        let u = SymbolicState { u: [PolyMat::zeros(0, 1), PolyMat::zeros(0, 1), poly_col(vec![x.mul(&x).mul(&y).mul(&y)])] };
        let bc = apply_lambda_bc(&u, &r);
        assert!(bc.r.is_zero());
        assert!(bc.x.get(0, 0).is_zero() && bc.x.get(1, 0).is_zero());
        let u = SymbolicState { u: [PolyMat::zeros(0, 1), PolyMat::zeros(0, 1), poly_col(vec![x.mul(&y)])] };
        let bc = apply_lambda_bc(&u, &r);
        let vals: Vec<Rat> = bc.r.as_consts().unwrap();
        assert_eq!(vals, vec![rat(0, 1), rat(0, 1), rat(0, 1), rat(1, 1)]);
        let bf = apply_lambda_bf(&u, &r);
        assert_eq!(bf.r.rows, 16);
        assert_eq!(bf.r.get(3, 0), &Poly::one());
        assert_eq!(bf_labels(0, 1).0.len(), 16);
        assert_eq!(bc_labels(1, 1).1.len(), 3);
    }
}
