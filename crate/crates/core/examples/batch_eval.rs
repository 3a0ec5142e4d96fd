//! Runs every template over a few seeds in parallel and prints the
//! aggregate report, with and without the roadside unit.
//!
//! `cargo run --release --example batch_eval -- [seeds] [threads]`

use coopdrive::harness::{evaluate, generate_scenario, run_batch, Config, Template};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let threads: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    for v2x in [true, false] {
        let mut cfg = Config::default();
        cfg.run.v2x = v2x;
        let scenarios = Template::ALL
            .iter()
            .flat_map(|&t| (0..seeds).map(move |s| (s, t)))
            .map(|(s, t)| generate_scenario(s, t, &cfg))
            .collect::<coopdrive::Result<Vec<_>>>()?;
        let records = run_batch(&scenarios, &cfg, threads)?;
        println!("== v2x {}", if v2x { "on" } else { "off" });
        print!("{}", evaluate(&records)?);
    }
    Ok(())
}
