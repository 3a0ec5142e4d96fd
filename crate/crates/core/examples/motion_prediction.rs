//! Prints the multi-modal trajectory fan of every agent at one frame.
//!
//! `cargo run --release --example motion_prediction -- [template] [seed] [frame]`

use coopdrive::harness::{generate_scenario, Config, Models, Pipeline, Template, EGO_ID};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let template: Template = args.next().as_deref().unwrap_or("merging").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let frame: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = Config::default();
    let s = generate_scenario(seed, template, &cfg)?;
    let models = Models::seeded(&cfg)?;
    let mut p = Pipeline::new(&s, &cfg, &models)?;
    let mut out = p.step()?;
    while out.frame < frame.min(s.frames - 1) {
        out = p.step()?;
    }
    println!("frame {}, horizon {} steps of {} s", out.frame, cfg.motion.horizon, cfg.motion.dt);
    for a in &out.motion.agents {
        let name = if a.id == EGO_ID { "ego".to_string() } else { a.id.to_string() };
        println!("agent {name} (top mode {})", a.top_mode());
        for (k, traj) in a.trajectories.iter().enumerate() {
            let end = traj.last().copied().unwrap_or([0.0, 0.0]);
            println!("  mode {k}: score {:.3} endpoint ({:6.2}, {:6.2})", a.scores[k], end[0], end[1]);
        }
    }
    Ok(())
}
