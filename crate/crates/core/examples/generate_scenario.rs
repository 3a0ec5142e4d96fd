//! Samples a scripted scenario and prints it with its ground-truth
//! collisions.
//!
//! `cargo run --release --example generate_scenario -- [template] [seed]`

use coopdrive::harness::{generate_scenario, Config, Template};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let template: Template = args.next().as_deref().unwrap_or("merging").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = Config::default();
    let s = generate_scenario(seed, template, &cfg)?;
    print!("{}", s.to_toml());
    println!("# {} frames at dt {} s", s.frames, s.dt);
    for a in s.all_agents() {
        let p = a.poses(s.frames, s.dt);
        let (first, last) = (p[0], p[s.frames - 1]);
        println!(
            "# agent {:4}: ({:6.2}, {:6.2}) -> ({:6.2}, {:6.2})",
            a.id, first.x, first.y, last.x, last.y
        );
    }
    for e in s.ground_truth_events(cfg.accident.threshold)? {
        println!("# collision {e}");
    }
    Ok(())
}
