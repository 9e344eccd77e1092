//! Randomized oracle suites shared by `pie2d selftest` and the acceptance test.
//!
//! Each suite draws seeded random instances, runs the symbolic operation and
//! compares against the quadrature oracle (or an exact identity) and returns
//! the worst error seen.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::inverse_011;
use crate::convert::{convert, d_of_t, PiePair};
use crate::error::Result;
use crate::op::{apply_poly, compose_011, Comp, N011, N1d, N2d, PiOp, COMPS};
use crate::pde::parse_pde;
use crate::poly::{rat, Poly, PolyMat, Rat, Rect, VarSet};
use crate::positivity::{lpi_param_map, PositivityBasis};
use crate::sdp::{read_sdpa, solve_sdp, write_sdpa, CEntry, Entry, SdpProblem, SdpSettings, SdpStatus};
use crate::verify::{
    adjoint_residual, apply_numeric, composition_residual, inner_product, probe_points, random_field, random_op,
    random_polymat, random_rat, rll_inner_product, Field, PolyField, QuadratureGrid, DEFAULT_ORDER,
};

/// Outcome of one suite.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    /// worst error, or the number of mismatches for exact checks
    pub worst: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, instances: usize, worst: f64, tol: f64, detail: String) -> Self {
        Check { name: name.into(), passed: worst <= tol, instances, worst, detail }
    }
    pub fn line(&self) -> String {
        format!(
            "{} {:<28} n={:<4} worst={:.3e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.worst,
            self.detail
        )
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rect(r: &mut impl Rng) -> Rect {
    let a = rat(r.gen_range(-2..=1), 2);
    let c = rat(r.gen_range(-2..=1), 2);
    let w = rat(r.gen_range(1..=4), 2);
    let h = rat(r.gen_range(1..=4), 2);
    Rect::new(a.clone(), a + w, c.clone(), c + h).expect("nonempty rectangle")
}

const D1: [usize; 4] = [0, 1, 0, 0];
const D011: [usize; 4] = [1, 1, 1, 0];
const D2: [usize; 4] = [0, 0, 0, 1];
const D0112: [usize; 4] = [1, 1, 1, 1];

/// The ten composition maps as `(name, out, mid, in)` signatures.
pub const COMPOSITION_MAPS: [(&str, [usize; 4], [usize; 4], [usize; 4]); 10] = [
    ("1D", D1, D1, D1),
    ("011", D011, D011, D011),
    ("2D", D2, D2, D2),
    ("011 o 2D->011", D011, D011, D2),
    ("2D->011 o 2D", D011, D2, D2),
    ("011->2D o 011", D2, D011, D011),
    ("2D o 011->2D", D2, D2, D011),
    ("2D->011 o 011->2D", D011, D2, D011),
    ("011->2D o 2D->011", D2, D011, D2),
    ("0112", D0112, D0112, D0112),
];

/// Symbolic composition against nested quadrature, one check per map.
///
/// With `perturb` the symbolic result gets a small extra kernel, which the
/// oracle must flag.
pub fn composition_suite(instances: usize, seed: u64, perturb: bool) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (k, (name, o, m, i)) in COMPOSITION_MAPS.iter().enumerate() {
        let mut r = rng(seed + k as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let rect = random_rect(&mut r);
            let grid = QuadratureGrid::new(DEFAULT_ORDER, &rect);
            let a = random_op(&mut r, *o, *m, &rect, 2);
            let b = random_op(&mut r, *m, *i, &rect, 2);
            let mut c = a.compose(&b)?;
            if perturb {
                c = c.add(&bump(o, i, &rect)?);
            }
            let u = random_field(&mut r, *i, 2);
            let pts = probe_points(&rect, 6, &mut r);
            worst = worst.max(composition_residual(&a, &b, &c, &u, &grid, &pts));
        }
        out.push(Check::new(&format!("composition {name}"), instances, worst, 1e-8, "rel. max-norm".into()));
    }
    Ok(out)
}

fn bump(rows: &[usize; 4], cols: &[usize; 4], rect: &Rect) -> Result<PiOp> {
    let mut op = PiOp::zero(*rows, *cols, rect);
    // a random R component can be zero, so bump a function-valued input when there is one
    let o = COMPS.into_iter().rev().find(|c| rows[c.idx()] > 0).expect("nonempty signature");
    let i = COMPS.into_iter().rev().find(|c| cols[c.idx()] > 0).expect("nonempty signature");
    let tx = crate::op::dir_types(o.has_x(), i.has_x())[0];
    let ty = crate::op::dir_types(o.has_y(), i.has_y())[0];
    let k = PolyMat::from_fn(rows[o.idx()], cols[i.idx()], |_, _| Poly::constant(rat(1, 1000)));
    op.add_term(o, i, tx, ty, k)?;
    Ok(op)
}

/// `⟨v, 𝒫u⟩ = ⟨𝒫̂v, u⟩` on random 2D and 0112 operators.
pub fn adjoint_suite(instances: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (k, (name, dims)) in [("2D", D2), ("0112", D0112)].into_iter().enumerate() {
        let mut r = rng(seed + k as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let rect = random_rect(&mut r);
            let grid = QuadratureGrid::new(DEFAULT_ORDER, &rect);
            let a = random_op(&mut r, dims, dims, &rect, 2);
            let u = random_field(&mut r, dims, 2);
            let v = random_field(&mut r, dims, 2);
            worst = worst.max(adjoint_residual(&a, &a.adjoint(), &u, &v, &grid));
        }
        out.push(Check::new(&format!("adjoint {name}"), instances, worst, 1e-8, "relative".into()));
    }
    Ok(out)
}

fn small_const(r: &mut impl Rng, rows: usize, cols: usize) -> PolyMat {
    let v: Vec<Rat> = (0..rows * cols).map(|_| random_rat(r) * rat(1, 10)).collect();
    PolyMat::from_consts(rows, cols, &v)
}

/// Identity plus 0.1-scaled random constant blocks.
pub fn random_near_identity_011(r: &mut impl Rng, n0: usize, n1: usize) -> N011 {
    let mut q = N011::identity(n0, n1);
    q.b00 = q.b00.add(&small_const(r, n0, n0));
    q.b01 = small_const(r, n0, n1);
    q.b02 = small_const(r, n0, n1);
    q.b10 = small_const(r, n1, n0);
    q.b20 = small_const(r, n1, n0);
    q.b12 = small_const(r, n1, n1);
    q.b21 = small_const(r, n1, n1);
    // separable means a full integral: equal lower and upper kernels
    let (kx, ky) = (small_const(r, n1, n1), small_const(r, n1, n1));
    q.b11 = N1d { n: [q.b11.n[0].clone(), kx.clone(), kx] };
    q.b22 = N1d { n: [q.b22.n[0].clone(), ky.clone(), ky] };
    q
}

fn inverse_ok(q: &N011, rect: &Rect) -> Result<bool> {
    let inv = inverse_011(q, rect)?;
    let ((n0, n1), (m0, m1)) = q.signature();
    let left = compose_011(&inv, q, rect)? == N011::identity(m0, m1);
    let right = compose_011(q, &inv, rect)? == N011::identity(n0, n1);
    Ok(left && right)
}

/// Exact two-sided inverse on random bundles plus the E bundles of the given PIEs.
pub fn inverse_suite(instances: usize, seed: u64, pies: &[(&str, &PiePair)]) -> Result<Check> {
    let mut r = rng(seed);
    let mut bad = 0usize;
    for k in 0..instances {
        let rect = random_rect(&mut r);
        let q = random_near_identity_011(&mut r, 1 + k % 2, 1 + (k / 2) % 2);
        if !inverse_ok(&q, &rect)? {
            bad += 1;
        }
    }
    let mut named = Vec::new();
    for (name, p) in pies {
        if !inverse_ok(&p.intermediates.e, &p.rect)? {
            bad += 1;
            named.push(*name);
        }
    }
    let detail = if named.is_empty() { "exact".to_string() } else { format!("exact; failed: {}", named.join(", ")) };
    Ok(Check::new("inverse 011", instances + pies.len(), bad as f64, 0.0, detail))
}

/// `𝒟u` for a polynomial state `u`, per the state's differentiability split.
fn apply_d(u: &PolyMat, n0: usize, n1: usize) -> PolyMat {
    use crate::poly::Var::{X, Y};
    PolyMat::from_fn(u.rows, 1, |i, _| {
        let p = u.get(i, 0);
        if i < n0 {
            p.clone()
        } else if i < n0 + n1 {
            p.diff(X).diff(Y)
        } else {
            p.diff(X).diff(X).diff(Y).diff(Y)
        }
    })
}

/// `𝒯(𝒟u) = u` for `u = 𝒯w` and the kernel-level `𝒟𝒯 = I`, exactly.
pub fn t_identity_suite(instances: usize, seed: u64, pies: &[(&str, &PiePair)]) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (k, (name, p)) in pies.iter().enumerate() {
        let mut r = rng(seed + k as u64);
        let s = &p.spec;
        let t = p.t_2d();
        let top = t.to_op(&p.rect)?;
        let n = s.n();
        let mut bad = 0usize;
        for _ in 0..instances {
            let w = random_polymat(&mut r, n, 1, VarSet::of(&[crate::poly::Var::X, crate::poly::Var::Y]), 4);
            let z = || PolyMat::zeros(0, 1);
            let u = apply_poly(&top, [z(), z(), z(), w])?[3].clone();
            let du = apply_d(&u, s.n0, s.n1);
            if apply_poly(&top, [z(), z(), z(), du])?[3] != u {
                bad += 1;
            }
        }
        out.push(Check::new(&format!("T(Du) = u {name}"), instances, bad as f64, 0.0, "exact".into()));
        let dt_ok = d_of_t(&t, s)? == N2d::identity(n);
        out.push(Check::new(&format!("DT = I {name}"), 1, if dt_ok { 0.0 } else { 1.0 }, 0.0, "kernel level".into()));
    }
    Ok(out)
}

/// Pointwise `g(x,y) = P f(x,y)` on the `XY` component.
struct Scaled<'a> {
    p: &'a Mat<f64>,
    f: &'a dyn Field,
}

impl Field for Scaled<'_> {
    fn dims(&self) -> [usize; 4] {
        self.f.dims()
    }
    fn eval(&self, c: Comp, x: f64, y: f64) -> Vec<f64> {
        let v = self.f.eval(c, x, y);
        (0..v.len()).map(|i| (0..v.len()).map(|j| self.p[(i, j)] * v[j]).sum()).collect()
    }
}

/// Random PSD `P = L Lᵀ` of random rank, in exact rationals.
fn random_psd(r: &mut impl Rng, q: usize) -> PolyMat {
    let rank = r.gen_range(1..=q);
    let l: Vec<Vec<Rat>> = (0..q).map(|_| (0..rank).map(|_| random_rat(r)).collect()).collect();
    PolyMat::from_fn(q, q, |i, j| {
        Poly::constant(l[i].iter().zip(&l[j]).fold(rat(0, 1), |acc, (a, b)| acc + a * b))
    })
}

/// `⟨u, 𝒵*P𝒵 u⟩ ≥ 0` and equal to `‖P^{1/2}𝒵u‖²` for random PSD `P`.
pub fn positivity_suite(instances: usize, seed: u64, degrees: &[u32]) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for &d in degrees {
        let mut r = rng(seed + d as u64);
        let (mut worst_neg, mut worst_rel): (f64, f64) = (0.0, 0.0);
        for _ in 0..instances {
            let rect = random_rect(&mut r);
            let grid = QuadratureGrid::new(DEFAULT_ORDER, &rect);
            let basis = PositivityBasis::new(1, d);
            let p = random_psd(&mut r, basis.q());
            let op = lpi_param_map(&basis, &p, &Poly::one(), &rect)?;
            let u = PolyField::from_rat(&random_field(&mut r, D2, 2));
            let pu = apply_numeric(&op, &u, &grid);
            let quad = rll_inner_product(&u, &pu, &grid);
            let z = basis.z_op::<Rat>(&rect)?;
            let zu = apply_numeric(&z, &u, &grid);
            let pf = p.to_f64();
            let pm = Mat::from_fn(pf.rows, pf.cols, |i, j| pf.get(i, j).as_const().unwrap_or(0.0));
            let pzu = Scaled { p: &pm, f: &zu };
            let norm2 = inner_product(&zu, &pzu, Comp::XY, &grid);
            worst_neg = worst_neg.max(-quad);
            worst_rel = worst_rel.max((quad - norm2).abs() / norm2.abs().max(1.0));
        }
        out.push(Check::new(&format!("positivity d={d} sign"), instances, worst_neg, 1e-10, "max -<u,Pu>".into()));
        out.push(Check::new(
            &format!("positivity d={d} Gram"),
            instances,
            worst_rel,
            1e-8,
            "|<u,Pu> - |P^1/2 Zu|^2|".into(),
        ));
    }
    Ok(out)
}

/// The bundled heat and wave PIEs used by the inverse and T-map suites.
pub fn reference_pies() -> Result<Vec<(&'static str, PiePair)>> {
    let files: [(&str, &str); 4] = [
        ("heat", include_str!("../examples/heat.pde")),
        ("heat (all edges)", include_str!("../examples/heat_r15.pde")),
        ("wave", include_str!("../examples/wave.pde")),
        ("wave (all edges)", include_str!("../examples/wave_dirichlet.pde")),
    ];
    files.iter().map(|(n, t)| Ok((*n, convert(&parse_pde(t)?)?))).collect()
}

fn upper_entries(c: &[Mat<f64>]) -> Vec<CEntry> {
    let mut out = Vec::new();
    for (b, m) in c.iter().enumerate() {
        for j in 0..m.ncols() {
            for i in 0..=j {
                if m[(i, j)] != 0.0 {
                    out.push(CEntry { block: b, i, j, v: m[(i, j)] });
                }
            }
        }
    }
    out
}

fn random_gram_f64(r: &mut impl Rng, s: usize, rank: usize) -> Mat<f64> {
    let g = Mat::from_fn(s, rank, |_, _| r.gen_range(-1.0..1.0));
    &g * g.transpose()
}

/// Primal feasible from a PSD `X₀` and dual feasible from a positive definite `S₀`.
pub fn constructed_sdp(r: &mut impl Rng) -> SdpProblem {
    let nb = r.gen_range(1..=3);
    let blocks: Vec<usize> = (0..nb).map(|_| r.gen_range(1..=6)).collect();
    let n: usize = blocks.iter().map(|s| s * (s + 1) / 2).sum();
    let m = r.gen_range(1..=n.min(12));
    let mut entries = Vec::new();
    for row in 0..m {
        let before = entries.len();
        for (b, &s) in blocks.iter().enumerate() {
            for j in 0..s {
                for i in 0..=j {
                    if r.gen_bool(0.5) {
                        entries.push(Entry { row, block: b, i, j, v: r.gen_range(-1.0..1.0) });
                    }
                }
            }
        }
        if entries.len() == before {
            entries.push(Entry { row, block: 0, i: 0, j: 0, v: 1.0 });
        }
    }
    let mut p = SdpProblem { blocks: blocks.clone(), entries, rhs: vec![0.0; m], objective: Vec::new() };
    let x0: Vec<Mat<f64>> = blocks.iter().map(|&s| {
        let k = r.gen_range(1..=s);
        random_gram_f64(r, s, k)
    }).collect();
    p.rhs = p.apply(&x0);
    let y0: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
    let ay = p.apply_adjoint(&y0);
    let c: Vec<Mat<f64>> = blocks
        .iter()
        .zip(&ay)
        .map(|(&s, a)| &random_gram_f64(r, s, s) + &Mat::<f64>::identity(s, s) * 0.1 + a)
        .collect();
    p.objective = upper_entries(&c);
    p
}

fn e(row: usize, block: usize, i: usize, j: usize, v: f64) -> Entry {
    Entry { row, block, i, j, v }
}
fn ce(block: usize, i: usize, j: usize, v: f64) -> CEntry {
    CEntry { block, i, j, v }
}

/// Instances with a known optimal value.
pub fn analytic_sdps() -> Vec<(&'static str, SdpProblem, f64)> {
    let mut out = Vec::new();
    out.push((
        "min tr X, X11 = 1",
        SdpProblem { blocks: vec![2], entries: vec![e(0, 0, 0, 0, 1.0)], rhs: vec![1.0], objective: vec![ce(0, 0, 0, 1.0), ce(0, 1, 1, 1.0)] },
        1.0,
    ));
    out.push((
        "min eigenvalue of diag(3,1,2)",
        SdpProblem {
            blocks: vec![3],
            entries: (0..3).map(|i| e(0, 0, i, i, 1.0)).collect(),
            rhs: vec![1.0],
            objective: vec![ce(0, 0, 0, 3.0), ce(0, 1, 1, 1.0), ce(0, 2, 2, 2.0)],
        },
        1.0,
    ));
    let mut theta = SdpProblem { blocks: vec![5], rhs: vec![1.0], ..Default::default() };
    theta.entries = (0..5).map(|i| e(0, 0, i, i, 1.0)).collect();
    for k in 0..5 {
        let (i, j) = (k.min((k + 1) % 5), k.max((k + 1) % 5));
        theta.entries.push(e(k + 1, 0, i, j, 1.0));
        theta.rhs.push(0.0);
    }
    theta.objective = (0..5).flat_map(|j| (0..=j).map(move |i| ce(0, i, j, -1.0))).collect();
    out.push(("Lovasz theta of C5", theta, -(5f64).sqrt()));
    out.push((
        "LP in 1x1 blocks",
        SdpProblem {
            blocks: vec![1, 1],
            entries: vec![e(0, 0, 0, 0, 1.0), e(0, 1, 0, 0, 2.0)],
            rhs: vec![2.0],
            objective: vec![ce(0, 0, 0, 1.0), ce(1, 0, 0, 1.0)],
        },
        1.0,
    ));
    out.push((
        "min 2 X12, unit diagonal",
        SdpProblem {
            blocks: vec![2],
            entries: vec![e(0, 0, 0, 0, 1.0), e(1, 0, 1, 1, 1.0)],
            rhs: vec![1.0, 1.0],
            objective: vec![ce(0, 0, 1, 1.0)],
        },
        -2.0,
    ));
    out
}

fn objective_value(p: &SdpProblem, x: &[Mat<f64>]) -> f64 {
    p.objective
        .iter()
        .map(|c| if c.i == c.j { c.v * x[c.block][(c.i, c.j)] } else { 2.0 * c.v * x[c.block][(c.i, c.j)] })
        .sum()
}

/// Constructed and analytic SDPs solved to the duality-gap tolerance, plus SDPA round trips.
pub fn sdp_suite(constructed: usize, seed: u64) -> Result<Vec<Check>> {
    let settings = SdpSettings::default();
    let mut r = rng(seed);
    let (mut worst, mut fails, mut trips) = (0.0f64, Vec::new(), 0usize);
    for k in 0..constructed {
        let p = constructed_sdp(&mut r);
        let s = solve_sdp(&p, &settings)?;
        if s.status != SdpStatus::Feasible {
            fails.push(format!("#{k} {:?}", s.status));
        }
        worst = worst.max(s.gap);
        let text = write_sdpa(&p);
        let back = read_sdpa(&text)?;
        if back != p || write_sdpa(&back) != text {
            trips += 1;
        }
    }
    let mut out = vec![Check::new(
        "sdp constructed",
        constructed,
        if fails.is_empty() { worst } else { f64::INFINITY },
        1e-8,
        if fails.is_empty() { "duality gap".into() } else { fails.join(", ") },
    )];
    let mut worst_a = 0.0f64;
    let mut notes = Vec::new();
    let analytic = analytic_sdps();
    for (name, p, opt) in &analytic {
        let s = solve_sdp(p, &settings)?;
        let err = (objective_value(p, &s.x) - opt).abs() / (1.0 + opt.abs());
        if s.status != SdpStatus::Feasible || err > 1e-7 {
            notes.push(format!("{name}: {:?} err {err:.2e}", s.status));
        }
        worst_a = worst_a.max(s.gap);
        if read_sdpa(&write_sdpa(p))? != *p {
            trips += 1;
        }
    }
    out.push(Check::new(
        "sdp analytic",
        analytic.len(),
        if notes.is_empty() { worst_a } else { f64::INFINITY },
        1e-8,
        if notes.is_empty() { "gap; optimum within 1e-7".into() } else { notes.join("; ") },
    ));
    out.push(Check::new("sdpa round trip", constructed + analytic.len(), trips as f64, 0.0, "bit-identical".into()));
    Ok(out)
}
