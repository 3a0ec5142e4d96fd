//! Tracks agents frame by frame and prints each track against the agent it
//! follows.
//!
//! `cargo run --release --example tracking -- [template] [seed]`

use coopdrive::harness::{generate_scenario, Config, Models, Pipeline, Template};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let template: Template = args.next().as_deref().unwrap_or("benign").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let cfg = Config::default();
    let s = generate_scenario(seed, template, &cfg)?;
    let models = Models::seeded(&cfg)?;
    let mut p = Pipeline::new(&s, &cfg, &models)?;
    for _ in 0..s.frames {
        let out = p.step()?;
        println!("frame {}", out.frame);
        for tr in &out.tracks.tracks {
            let err = out
                .truth
                .iter()
                .find(|a| Some(a.id) == tr.source)
                .map(|a| (a.bbox.x - tr.bbox.x).hypot(a.bbox.y - tr.bbox.y));
            println!(
                "  track {:2} <- agent {:>4} age {:2} coast {} pos ({:7.2}, {:6.2}) v ({:5.2}, {:5.2}){}",
                tr.id,
                tr.source.map_or("-".into(), |s| s.to_string()),
                tr.age,
                tr.coast,
                tr.bbox.x,
                tr.bbox.y,
                tr.velocity[0],
                tr.velocity[1],
                err.map_or(String::new(), |e| format!(" err {e:.3} m"))
            );
        }
    }
    Ok(())
}
