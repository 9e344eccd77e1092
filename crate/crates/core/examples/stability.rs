//! Certify exponential stability of a damped transport equation at degree 0
//! and re-check the certificate independently of the solver.

use pie2d::convert::convert;
use pie2d::lpi::{certify, estimate_size, LpiOptions, StabilityReport};
use pie2d::pde::load_pde;
use pie2d::sdp::SdpSettings;

fn main() -> pie2d::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/transport.pde").into());
    let degree = std::env::args().nth(2).map(|d| d.parse().expect("degree")).unwrap_or(0);
    let pair = convert(&load_pde(std::path::Path::new(&path), &[])?)?;
    let opts = LpiOptions::with_degree(degree);
    let size = estimate_size(&pair, &opts)?;
    println!("slack degree {:?}, Gram blocks {:?}, about {} constraints", size.slack_degree, size.blocks, size.d_coefficients);
    let run = certify(&pair, &opts, &SdpSettings::default())?;
    println!("{}", serde_json::to_string_pretty(&StabilityReport::from_run(&run)).expect("json"));
    Ok(())
}
