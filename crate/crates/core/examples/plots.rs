//! Runs one scenario and writes the BEV heat map and trajectory SVGs for
//! every frame.
//!
//! `cargo run --release --example plots -- [out_dir] [template] [seed]`

use std::path::PathBuf;

use coopdrive::harness::{emit_plots, generate_scenario, run_pipeline, Config, Template};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "plots".into()));
    let template: Template = args.next().as_deref().unwrap_or("crossing").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = Config::default();
    let record = run_pipeline(&generate_scenario(seed, template, &cfg)?, &cfg)?;
    for p in emit_plots(&record, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}
