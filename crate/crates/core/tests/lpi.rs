use std::collections::BTreeSet;
use std::path::PathBuf;

use faer::Mat;
use pie2d::convert::{convert, PiePair};
use pie2d::lpi::{
    assemble_lpi, bisect_parameter, certify, estimate_size, reconstruct, verify_certificate, Direction, LpiOptions,
};
use pie2d::op::{PiOp, Ty};
use pie2d::pde::{load_pde, parse_pde};
use pie2d::sdp::SdpSettings;
use pie2d::{Error, Mono};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ex(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn pie(name: &str) -> PiePair {
    convert(&load_pde(&ex(name), &[]).unwrap()).unwrap()
}

const SCALAR: &str = "[domain]\nx = 0 1\ny = 0 1\n[states]\nn0 = 1\nn1 = 0\nn2 = 0\n[dynamics]\nA00 = {a}\n";

fn scalar(a: &str) -> PiePair {
    convert(&parse_pde(&SCALAR.replace("{a}", a)).unwrap()).unwrap()
}

/// Matched coefficient positions of a self-adjoint operator: one kernel per
/// adjoint pair, upper triangle for kernels that are their own partner.
fn coefficient_keys(op: &PiOp, into: &mut BTreeSet<(usize, usize, Ty, Ty, usize, usize, Mono)>) {
    for (o, i, tx, ty, k) in op.terms() {
        let (o, i) = (o.idx(), i.idx());
        let own = (tx, ty);
        let partner = (tx.adjoint(), ty.adjoint());
        if o > i || (o == i && own > partner) {
            continue;
        }
        let selfpair = o == i && own == partner;
        for r in 0..k.rows {
            for c in if selfpair { r } else { 0 }..k.cols {
                for m in k.get(r, c).terms.keys() {
                    into.insert((o, i, tx, ty, r, c, *m));
                }
            }
        }
    }
}

fn random_psd(rng: &mut impl Rng, s: usize) -> Mat<f64> {
    let g = Mat::from_fn(s, s, |_, _| rng.gen_range(-1.0..1.0));
    &g * g.transpose()
}

#[test]
fn constraint_count_matches_distinct_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (p, d) in [(scalar("-1"), 0), (pie("transport.pde"), 0)] {
        let lpi = assemble_lpi(&p, &LpiOptions::with_degree(d)).unwrap();
        let x: Vec<Mat<f64>> = lpi.sdp.blocks.iter().map(|&s| random_psd(&mut rng, s)).collect();
        let rec = reconstruct(&lpi, &x).unwrap();
        let mut keys = BTreeSet::new();
        coefficient_keys(&rec.d, &mut keys);
        coefficient_keys(&rec.slack, &mut keys);
        assert_eq!(lpi.sdp.m(), keys.len());
    }
}

#[test]
fn scalar_decay_certifies_and_tampering_is_caught() {
    let lpi_run = certify(&scalar("-1"), &LpiOptions::with_degree(0), &SdpSettings::default()).unwrap();
    assert!(lpi_run.verdict.certified, "{:?}", lpi_run.verdict);
    assert!(lpi_run.verdict.p_selfadjoint && lpi_run.verdict.d_selfadjoint);
    assert!(lpi_run.verdict.min_eig >= -1e-9 && lpi_run.verdict.residual <= 1e-7);

    let mut bad = lpi_run.solution.clone();
    bad.x[0] = -&bad.x[0];
    let v = verify_certificate(&lpi_run.lpi, &bad).unwrap();
    assert!(!v.certified);
    assert!(v.failing.unwrap().contains("eigenvalue"));

    let mut bad = lpi_run.solution.clone();
    let last = bad.x.len() - 1;
    bad.x[last][(0, 0)] += 1e-3;
    let v = verify_certificate(&lpi_run.lpi, &bad).unwrap();
    assert!(!v.certified);
    assert!(v.failing.unwrap().contains("residual"));
}

#[test]
fn unstable_scalar_is_not_certified() {
    let run = certify(&scalar("1/2"), &LpiOptions::with_degree(0), &SdpSettings::default()).unwrap();
    assert!(!run.verdict.certified);
}

#[test]
fn transport_certifies_at_degree_zero() {
    let run = certify(&pie("transport.pde"), &LpiOptions::with_degree(0), &SdpSettings::default()).unwrap();
    assert!(run.verdict.certified, "{:?}", run.verdict);
    assert!(run.verdict.decay_bound > 0.0);
}

#[test]
fn certification_is_monotone_in_degree() {
    for d in 0..=2 {
        let run = certify(&scalar("-1"), &LpiOptions::with_degree(d), &SdpSettings::default()).unwrap();
        assert!(run.verdict.certified, "degree {d}: {:?}", run.verdict);
    }
}

#[test]
fn scaling_the_generator_keeps_the_certificate() {
    // A -> 2A with del -> 2 del: the same P works, with the slack doubled
    let mut o1 = LpiOptions::with_degree(0);
    o1.del = Some(pie2d::rat(1, 100));
    let mut o2 = o1.clone();
    o2.del = Some(pie2d::rat(2, 100));
    let run = certify(&pie("transport.pde"), &o1, &SdpSettings::default()).unwrap();
    assert!(run.verdict.certified, "{:?}", run.verdict);
    let text = std::fs::read_to_string(ex("transport.pde")).unwrap().replace("= -1", "= -2");
    let doubled = convert(&parse_pde(&text).unwrap()).unwrap();
    let lpi2 = assemble_lpi(&doubled, &o2).unwrap();
    assert_eq!(lpi2.sdp.blocks, run.lpi.sdp.blocks);
    let mut sol = run.solution.clone();
    for h in 2..4 {
        if let Some(b) = run.lpi.block_of[h] {
            sol.x[b] = &sol.x[b] * 2.0;
        }
    }
    let v = verify_certificate(&lpi2, &sol).unwrap();
    assert!(v.certified, "{:?}", v);
    assert!((v.zeta - run.verdict.zeta).abs() <= 1e-12 * run.verdict.zeta.max(1.0));
}

#[test]
fn oversized_problems_are_refused_with_numbers() {
    let p = convert(&load_pde(&ex("heat_reaction.pde"), &[("r", "18")]).unwrap()).unwrap();
    let size = estimate_size(&p, &LpiOptions::with_degree(3)).unwrap();
    assert!(size.blocks.iter().any(|&b| b > 600));
    match assemble_lpi(&p, &LpiOptions::with_degree(3)) {
        Err(Error::TooLarge(msg)) => assert!(msg.contains("Gram blocks"), "{msg}"),
        other => panic!("expected a size error, got {:?}", other.map(|l| l.sdp.blocks)),
    }
}

#[test]
fn bisection_brackets_the_sign_change() {
    let out = bisect_parameter(SCALAR, "a", -2.0, 1.0, 6, &LpiOptions::with_degree(0), &SdpSettings::default()).unwrap();
    assert_eq!(out.direction, Some(Direction::Upper));
    let t = out.threshold.unwrap();
    assert!(t < 0.0 && t > -0.1, "{t}");
    assert_eq!(out.probes.len(), 8);
}

#[test]
fn bisection_edge_cases() {
    let opts = LpiOptions::with_degree(0);
    let s = SdpSettings::default();
    assert!(bisect_parameter(SCALAR, "a", 1.0, 1.0, 4, &opts, &s).is_err());
    assert!(bisect_parameter(SCALAR, "b", -1.0, 0.0, 4, &opts, &s).is_err());
    let none = bisect_parameter(SCALAR, "a", 0.5, 1.0, 4, &opts, &s).unwrap();
    assert!(none.threshold.is_none() && none.message.contains("exhausted"));
}
