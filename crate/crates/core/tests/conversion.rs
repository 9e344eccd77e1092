use std::path::PathBuf;

use pie2d::convert::{check_wellposed, convert, d_of_t, readout_kernel};
use pie2d::op::{Comp, N2d, Ty};
use pie2d::pde::load_pde;
use pie2d::{rat, Poly, PolyMat, Rat, Var};

fn ex(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn var(v: Var) -> Poly {
    Poly::var(v)
}
fn c(n: i64) -> Poly {
    Poly::constant(rat(n, 1))
}
fn scalar(p: Poly) -> PolyMat {
    let mut m = PolyMat::zeros(1, 1);
    m.set(0, 0, p);
    m
}

fn g(s: Var, e: Var) -> Poly {
    var(s).sub(&c(1)).mul(&var(e))
}

#[test]
fn heat_reaction_kernels_factor() {
    let s = load_pde(&ex("heat_reaction.pde"), &[("r", "3")]).unwrap();
    assert!(check_wellposed(&s).well_posed);
    let pie = convert(&s).unwrap();
    let t = pie.t_2d();
    use Var::*;
    let gx = [g(X, Th), g(Th, X)];
    let gy = [g(Y, Nu), g(Nu, Y)];
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(t.n[i + 1][j + 1], scalar(gx[i].mul(&gy[j])), "T[{}][{}]", i + 1, j + 1);
        }
    }
    let a = pie.a_2d();
    for i in 0..2 {
        assert_eq!(a.n[i + 1][0], scalar(gx[i].clone()));
        assert_eq!(a.n[0][i + 1], scalar(gy[i].clone()));
        for j in 0..2 {
            assert_eq!(a.n[i + 1][j + 1], t.n[i + 1][j + 1].scale(&rat(3, 1)));
        }
    }
    assert!(a.n[0][0].is_zero());
    assert_eq!(d_of_t(&t, &s).unwrap(), N2d::identity(1));
}

fn diag2(p: &Poly) -> PolyMat {
    let mut m = PolyMat::zeros(2, 2);
    m.set(0, 0, p.clone());
    m.set(1, 1, p.clone());
    m
}
fn at2(i: usize, j: usize, p: Poly) -> PolyMat {
    let mut m = PolyMat::zeros(2, 2);
    m.set(i, j, p);
    m
}

#[test]
fn wave_closed_form() {
    use Var::*;
    let s = load_pde(&ex("wave.pde"), &[]).unwrap();
    let pie = convert(&s).unwrap();
    let t = pie.t_2d();
    let xt = var(X).sub(&var(Th));
    let yn = var(Y).sub(&var(Nu));
    assert_eq!(t.n[1][1], diag2(&xt.mul(&yn)));
    let a = pie.a_2d();
    // u1' = u2 and u2' = Δu1: the x/y single integrals feed the second row
    assert_eq!(a.n[1][0], at2(1, 0, xt.clone()));
    assert_eq!(a.n[0][1], at2(1, 0, yn.clone()));
    assert_eq!(a.n[1][1], at2(0, 1, xt.mul(&yn)));
    let nnz = a.n.iter().flatten().chain(t.n.iter().flatten()).filter(|m| !m.is_zero()).count();
    assert_eq!(nnz, 4);
}

#[test]
fn wave_dirichlet_is_wellposed() {
    let s = load_pde(&ex("wave_dirichlet.pde"), &[]).unwrap();
    let pie = convert(&s).unwrap();
    assert_eq!(d_of_t(&pie.t_2d(), &s).unwrap(), N2d::identity(2));
}

#[test]
fn coupled_closed_form() {
    use Var::*;
    let s = load_pde(&ex("ode_coupled.pde"), &[("k", "-2")]).unwrap();
    let pie = convert(&s).unwrap();
    let t = pie.t_2d();
    let fx = [c(1).sub(&var(X)), c(1).sub(&var(Th))];
    let fy = [c(1).sub(&var(Y)), c(1).sub(&var(Nu))];
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(t.n[i + 1][j + 1], scalar(fx[i].mul(&fy[j])));
        }
    }
    let a = pie.a_2d();
    let hx = [var(X).sub(&c(1)), var(Th).sub(&c(1))];
    let hy = [var(Y).sub(&c(1)), var(Nu).sub(&c(1))];
    for i in 0..2 {
        assert_eq!(a.n[i + 1][0], scalar(hx[i].clone()));
        assert_eq!(a.n[0][i + 1], scalar(hy[i].clone()));
    }
    // ODE block and readout (1−θ)(1−ν)
    assert_eq!(pie.a.kernel(Comp::R, Comp::R, Ty::C, Ty::C), scalar(c(-1)));
    assert_eq!(pie.a.kernel(Comp::R, Comp::XY, Ty::I, Ty::I), scalar(fx[1].mul(&fy[1])));
    assert_eq!(pie.t.kernel(Comp::R, Comp::R, Ty::C, Ty::C), scalar(c(1)));
    let ro = readout_kernel(&t, &(Rat::from_integer(0.into()), Rat::from_integer(0.into())), &s.rect).unwrap();
    assert_eq!(ro, scalar(fx[1].mul(&fy[1])));
}

#[test]
fn templated_files_need_parameters() {
    assert!(load_pde(&ex("heat_reaction.pde"), &[]).is_err());
    assert!(load_pde(&ex("heat_r{R}.pde"), &[("R", "12.5")]).is_ok());
    assert!(load_pde(&ex("ode_coupled.pde"), &[]).is_err());
}
