//! Convert the bundled heat equation to a PIE and print its kernels.
//!
//! `cargo run --example convert -- examples/wave.pde` converts another file.

use pie2d::convert::{check_wellposed, convert, d_of_t, emit_pie};
use pie2d::op::N2d;
use pie2d::pde::load_pde;

fn main() -> pie2d::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/heat.pde").into());
    let spec = load_pde(std::path::Path::new(&path), &[])?;
    let report = check_wellposed(&spec);
    println!("well posed: {}", report.well_posed);
    let pie = convert(&spec)?;
    print!("{}", emit_pie(&pie));
    let dt = d_of_t(&pie.t_2d(), &spec)?;
    println!("D T = I: {}", dt == N2d::identity(spec.n()));
    Ok(())
}
