//! Acceptance run: one PASS/FAIL line per criterion. Always exits 0; the
//! printed lines are the result.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use pie2d::convert::{convert, readout_kernel, PiePair};
use pie2d::lpi::{
    bisect_parameter, certify, estimate_size, verify_certificate, LpiOptions, StabilityRun, StabilityVerdict,
};
use pie2d::op::{Comp, Ty};
use pie2d::pde::load_pde;
use pie2d::sdp::SdpSettings;
use pie2d::suite::{self, Check};
use pie2d::{rat, Poly, PolyMat, Var};

fn ex(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn pie(name: &str, params: &[(&str, &str)]) -> PiePair {
    convert(&load_pde(&ex(name), params).expect("bundled file parses")).expect("bundled file converts")
}

struct Line {
    n: usize,
    passed: bool,
    text: String,
}

fn report(n: usize, passed: bool, text: impl Into<String>) -> Line {
    let l = Line { n, passed, text: text.into() };
    println!("criterion {:>2}: {} {}", l.n, if l.passed { "PASS" } else { "FAIL" }, l.text);
    l
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.line()).collect();
    let worst = checks.iter().map(|c| c.worst).fold(0.0, f64::max);
    if failed.is_empty() {
        (true, format!("{} checks, worst {:.2e}", checks.len(), worst))
    } else {
        (false, failed.join(" | "))
    }
}

fn show(checks: &[Check]) {
    for c in checks {
        println!("    {}", c.line());
    }
}

// ---------------------------------------------------------------------------
// closed forms

fn v(x: Var) -> Poly {
    Poly::var(x)
}
fn k(n: i64) -> Poly {
    Poly::constant(rat(n, 1))
}
fn one(p: Poly) -> PolyMat {
    PolyMat::from_fn(1, 1, |_, _| p.clone())
}
fn at2(i: usize, j: usize, p: Poly) -> PolyMat {
    let mut m = PolyMat::zeros(2, 2);
    m.set(i, j, p);
    m
}

fn heat_closed_form() -> bool {
    use Var::*;
    let p = pie("heat.pde", &[]);
    let (t, a) = (p.t_2d(), p.a_2d());
    let xt = v(X).sub(&v(Th));
    let yn = v(Y).sub(&v(Nu));
    t.n[1][1] == one(xt.mul(&yn))
        && [(0, 0), (1, 2), (2, 1), (2, 2)].iter().all(|&(i, j)| t.n[i][j].is_zero())
        && a.n[1][0] == one(xt)
        && a.n[0][1] == one(yn)
        && a.n.iter().flatten().filter(|m| !m.is_zero()).count() == 2
}

fn heat_all_edges_closed_form() -> bool {
    use Var::*;
    let r = 7;
    let p = pie("heat_reaction.pde", &[("r", "7")]);
    let (t, a) = (p.t_2d(), p.a_2d());
    let g = |s: Var, e: Var| v(s).sub(&k(1)).mul(&v(e));
    let gx = [g(X, Th), g(Th, X)];
    let gy = [g(Y, Nu), g(Nu, Y)];
    let mut ok = a.n[0][0].is_zero();
    for i in 0..2 {
        ok &= a.n[i + 1][0] == one(gx[i].clone()) && a.n[0][i + 1] == one(gy[i].clone());
        for j in 0..2 {
            ok &= t.n[i + 1][j + 1] == one(gx[i].mul(&gy[j]));
            ok &= a.n[i + 1][j + 1] == t.n[i + 1][j + 1].scale(&rat(r, 1));
        }
    }
    ok
}

fn wave_closed_form() -> bool {
    use Var::*;
    let p = pie("wave.pde", &[]);
    let (t, a) = (p.t_2d(), p.a_2d());
    let xt = v(X).sub(&v(Th));
    let yn = v(Y).sub(&v(Nu));
    let diag = PolyMat::from_fn(2, 2, |i, j| if i == j { xt.mul(&yn) } else { Poly::zero() });
    let nnz = a.n.iter().flatten().chain(t.n.iter().flatten()).filter(|m| !m.is_zero()).count();
    t.n[1][1] == diag
        && a.n[1][0] == at2(1, 0, xt.clone())
        && a.n[0][1] == at2(1, 0, yn.clone())
        && a.n[1][1] == at2(0, 1, xt.mul(&yn))
        && nnz == 4
}

fn coupled_closed_form() -> bool {
    use Var::*;
    let p = pie("ode_coupled.pde", &[("k", "-2")]);
    let (t, a) = (p.t_2d(), p.a_2d());
    let fx = [k(1).sub(&v(X)), k(1).sub(&v(Th))];
    let fy = [k(1).sub(&v(Y)), k(1).sub(&v(Nu))];
    let hx = [v(X).sub(&k(1)), v(Th).sub(&k(1))];
    let hy = [v(Y).sub(&k(1)), v(Nu).sub(&k(1))];
    let mut ok = true;
    for i in 0..2 {
        ok &= a.n[i + 1][0] == one(hx[i].clone()) && a.n[0][i + 1] == one(hy[i].clone());
        for j in 0..2 {
            ok &= t.n[i + 1][j + 1] == one(fx[i].mul(&fy[j]));
        }
    }
    // (1−x)(1−y) B weighting of the readout, ODE block A + BK
    let corner = (rat(0, 1), rat(0, 1));
    ok && p.a.kernel(Comp::R, Comp::R, Ty::C, Ty::C) == one(k(-1))
        && p.a.kernel(Comp::R, Comp::XY, Ty::I, Ty::I) == one(fx[1].mul(&fy[1]))
        && p.t.kernel(Comp::R, Comp::R, Ty::C, Ty::C) == one(k(1))
        && readout_kernel(&t, &corner, &p.rect).map(|r| r == one(fx[1].mul(&fy[1]))).unwrap_or(false)
}

// ---------------------------------------------------------------------------
// certification

enum Outcome {
    Run(Box<StabilityRun>),
    Refused(String),
}

fn attempt(p: &PiePair, opts: &LpiOptions) -> Outcome {
    match certify(p, opts, &SdpSettings::default()) {
        Ok(r) => Outcome::Run(Box::new(r)),
        Err(e) => Outcome::Refused(e.to_string()),
    }
}

fn describe(o: &Outcome) -> String {
    match o {
        Outcome::Run(r) => format!(
            "verdict certified={} decay bound {:.3e} residual {:.2e} min eig {:.2e}{}",
            r.verdict.certified,
            r.verdict.decay_bound,
            r.verdict.residual,
            r.verdict.min_eig,
            r.verdict.failing.as_ref().map(|f| format!(" ({f})")).unwrap_or_default()
        ),
        Outcome::Refused(e) => e.clone(),
    }
}

fn certified(o: &Outcome, verdicts: &mut Vec<StabilityVerdict>) -> bool {
    match o {
        Outcome::Run(r) => {
            verdicts.push(r.verdict.clone());
            r.verdict.certified
        }
        Outcome::Refused(_) => false,
    }
}

fn main() {
    let mut lines = Vec::new();
    let seed = 20_240_601;

    // 1
    let t0 = Instant::now();
    let checks = suite::composition_suite(100, seed, false).expect("composition suite runs");
    let took = t0.elapsed();
    show(&checks);
    let (ok, text) = summarize(&checks);
    let fast = took <= Duration::from_secs(120);
    lines.push(report(1, ok && fast, format!("10 composition maps x 100 instances, {text}, {:.1} s", took.as_secs_f64())));

    // 2
    let checks = suite::adjoint_suite(100, seed + 1).expect("adjoint suite runs");
    show(&checks);
    let (ok, text) = summarize(&checks);
    lines.push(report(2, ok, format!("adjoints on 2D and 0112, {text}")));

    // 3, 4
    let pies = suite::reference_pies().expect("bundled files convert");
    let refs: Vec<_> = pies.iter().map(|(n, p)| (*n, p)).collect();
    let inv = suite::inverse_suite(50, seed + 2, &refs).expect("inverse suite runs");
    show(std::slice::from_ref(&inv));
    lines.push(report(3, inv.passed, format!("50 random bundles + heat/wave E, {} exact mismatches", inv.worst)));

    let checks = suite::t_identity_suite(25, seed + 3, &refs).expect("T identity suite runs");
    show(&checks);
    let (ok, text) = summarize(&checks);
    lines.push(report(4, ok, format!("T(Du) = u and DT = I on heat and wave, {text}")));

    // 5
    let forms = [
        ("heat", heat_closed_form()),
        ("heat all edges", heat_all_edges_closed_form()),
        ("wave", wave_closed_form()),
        ("coupled", coupled_closed_form()),
    ];
    let bad: Vec<&str> = forms.iter().filter(|f| !f.1).map(|f| f.0).collect();
    lines.push(report(
        5,
        bad.is_empty(),
        if bad.is_empty() { "heat (both BC sets), wave and coupled kernels exact".to_string() } else { format!("mismatch: {}", bad.join(", ")) },
    ));

    let mut verdicts = Vec::new();

    // 6
    let t6 = Instant::now();
    let heat18 = pie("heat_reaction.pde", &[("r", "18")]);
    let o6 = attempt(&heat18, &LpiOptions::with_degree(3));
    let c6 = certified(&o6, &mut verdicts);
    let bis = if c6 {
        let template = std::fs::read_to_string(ex("heat_reaction.pde")).expect("bundled file");
        match bisect_parameter(&template, "r", 0.0, 25.0, 12, &LpiOptions::with_degree(3), &SdpSettings::default()) {
            Ok(b) => (b.threshold.is_some_and(|t| t >= 18.0), format!("bisection threshold {:?}", b.threshold)),
            Err(e) => (false, format!("bisection: {e}")),
        }
    } else {
        (false, "bisection skipped".to_string())
    };
    let in_time = t6.elapsed() <= Duration::from_secs(1800);
    lines.push(report(6, c6 && bis.0 && in_time, format!("heat+reaction r=18, d=3: {}; {}", describe(&o6), bis.1)));

    // 7
    let wave = pie("wave_dirichlet.pde", &[]);
    let mut o = LpiOptions::with_degree(3);
    o.del = Some(rat(0, 1));
    let ow = attempt(&wave, &o);
    let cw = certified(&ow, &mut verdicts);
    let coupled = pie("ode_coupled.pde", &[("k", "-1.5")]);
    let oc = attempt(&coupled, &LpiOptions::with_degree(2));
    let cc = certified(&oc, &mut verdicts);
    lines.push(report(
        7,
        cw && cc,
        format!("wave all edges, del=0, d=3: {}; coupled k=-1.5, d=2: {}", describe(&ow), describe(&oc)),
    ));

    // 8
    let mut small = Vec::new();
    let decay = pie("decay.pde", &[]);
    let transport = pie("transport.pde", &[]);
    for (name, p) in [("decay", &decay), ("transport", &transport)] {
        let o = attempt(p, &LpiOptions::with_degree(0));
        let ok = certified(&o, &mut verdicts);
        small.push(format!("{name} d=0 certified={ok}"));
        if let Outcome::Run(r) = o {
            if name == "transport" {
                let mut bad = r.solution.clone();
                bad.x[0] = -&bad.x[0];
                let v = verify_certificate(&r.lpi, &bad).expect("shapes match");
                small.push(format!("negated block rejected={}", !v.certified));
            }
        }
    }
    let tamper_ok = small.iter().any(|s| s == "negated block rejected=true");
    let all_sound = verdicts.iter().filter(|v| v.certified).all(|v| {
        v.p_selfadjoint && v.d_selfadjoint && v.min_eig >= -1e-9 && v.residual <= 1e-7
    });
    let n_cert = verdicts.iter().filter(|v| v.certified).count();
    lines.push(report(
        8,
        all_sound && tamper_ok && n_cert > 0,
        format!("{n_cert} certified runs re-checked; {}", small.join(", ")),
    ));

    // 9
    let checks = suite::sdp_suite(20, seed + 4).expect("sdp suite runs");
    show(&checks);
    let (ok, text) = summarize(&checks);
    lines.push(report(9, ok, format!("20 constructed + 5 analytic SDPs and SDPA round trip, {text}")));

    // 10
    let checks = suite::positivity_suite(100, seed + 5, &[0, 1, 2]).expect("positivity suite runs");
    show(&checks);
    let (ok, text) = summarize(&checks);
    lines.push(report(10, ok, format!("100 random PSD Gram matrices per degree 0..2, {text}")));

    // sizes behind criteria 6 and 7
    for (name, p, d) in [("heat r=18", &heat18, 3), ("wave all edges", &wave, 3), ("coupled k=-1.5", &coupled, 2)] {
        if let Ok(s) = estimate_size(p, &LpiOptions::with_degree(d)) {
            println!(
                "    size {name} d={d}: slack degree {:?}, Gram blocks {:?}, at least {} constraints",
                s.slack_degree, s.blocks, s.d_coefficients
            );
        }
    }
    let passed = lines.iter().filter(|l| l.passed).count();
    println!("acceptance: {passed} of {} criteria pass", lines.len());
}
