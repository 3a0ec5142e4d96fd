//! Compares every analytic backward pass against central differences.
//!
//! `cargo run --release --example gradient_check -- [cases] [seed]`

use coopdrive::tensor::RngSeed;
use coopdrive::verify::{gradient_suite, GRAD_TOL};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let cases: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(25);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    for c in gradient_suite(cases, RngSeed(seed))? {
        println!(
            "{:16} {:3} cases {:7} entries  max rel error {:.2e}  {}",
            c.name,
            c.cases,
            c.entries,
            c.max_rel_error,
            if c.passed(cases) { "ok" } else { "FAIL" }
        );
    }
    println!("tolerance {GRAD_TOL:.0e}");
    Ok(())
}
