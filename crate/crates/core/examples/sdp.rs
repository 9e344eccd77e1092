//! Solve the Lovász theta SDP of the 5-cycle and round-trip it through SDPA format.

use pie2d::sdp::{read_sdpa, solve_sdp, write_sdpa, SdpSettings};
use pie2d::suite::analytic_sdps;

fn main() -> pie2d::Result<()> {
    for (name, p, opt) in analytic_sdps() {
        let s = solve_sdp(&p, &SdpSettings::default())?;
        println!("{name:<32} {:?} in {:>2} iterations, gap {:.1e}, expected optimum {opt:.10}", s.status, s.iters, s.gap);
    }
    let (_, theta, _) = analytic_sdps().remove(2);
    let text = write_sdpa(&theta);
    print!("{text}");
    assert_eq!(read_sdpa(&text)?, theta);
    println!("round trip ok");
    Ok(())
}
