//! Generates a scenario, runs the full pipeline on it and prints the
//! predicted and ground-truth collision events.
//!
//! `cargo run --release --example run_scenario -- [template] [seed]`

use coopdrive::harness::{evaluate, generate_scenario, run_pipeline, Config, Template};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let template: Template = args.next().as_deref().unwrap_or("crossing").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = Config::default();
    let scenario = generate_scenario(seed, template, &cfg)?;
    let record = run_pipeline(&scenario, &cfg)?;
    for f in &record.frames {
        let ids: Vec<String> = f.tracks.iter().map(|t| t.id.to_string()).collect();
        println!("frame {:2}: tracks [{}], {} warnings", f.frame, ids.join(" "), f.events.len());
    }
    println!("predicted (first warning per pair):");
    for e in &record.events_pred {
        println!("  {e}");
    }
    println!("ground truth:");
    for e in &record.events_gt {
        println!("  {e}");
    }
    print!("{}", evaluate(std::slice::from_ref(&record))?);
    Ok(())
}
