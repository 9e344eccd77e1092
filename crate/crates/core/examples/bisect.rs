//! Bisection on `a` in x' = a x over [-2, 1]: certified exactly when a < 0.

use pie2d::lpi::{bisect_parameter, LpiOptions};
use pie2d::sdp::SdpSettings;

const TEMPLATE: &str = "[domain]\nx = 0 1\ny = 0 1\n[states]\nn0 = 1\nn1 = 0\nn2 = 0\n[dynamics]\nA00 = {a}\n";

fn main() -> pie2d::Result<()> {
    let out = bisect_parameter(TEMPLATE, "a", -2.0, 1.0, 10, &LpiOptions::with_degree(0), &SdpSettings::default())?;
    for p in &out.probes {
        println!("a = {:<10.6} certified: {:<5} {}", p.value, p.certified, p.note);
    }
    println!("{}: threshold {:?} (resolution {:.1e})", out.message, out.threshold, out.resolution);
    Ok(())
}
