//! Runs the ego BEV encoder on one frame and prints the per-cell feature
//! norm as a coarse character map: ego at the center facing right, one
//! character per cell column and every second row.
//!
//! `cargo run --release --example encode_bev -- [template] [seed]`

use coopdrive::harness::{generate_scenario, Config, Models, Pipeline, Template};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let template: Template = args.next().as_deref().unwrap_or("following").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = Config::default();
    cfg.run.v2x = false;
    let s = generate_scenario(seed, template, &cfg)?;
    let models = Models::seeded(&cfg)?;
    let out = Pipeline::new(&s, &cfg, &models)?.step()?;

    let bev = &out.ego_bev;
    let norms = bev.cell_norms();
    let (lo, hi) = norms.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &n| (l.min(n), h.max(n)));
    println!(
        "grid {}x{} at {} m, {} channels, norm range {lo:.3}..{hi:.3}",
        bev.grid.h,
        bev.grid.w,
        bev.grid.resolution,
        bev.channels()
    );
    let ramp = b" .:-=+*#%@";
    for i in (0..bev.grid.h).rev().step_by(2) {
        let line: String = (0..bev.grid.w)
            .map(|j| {
                let x = (norms[i * bev.grid.w + j] - lo) / (hi - lo).max(1e-12);
                ramp[((x * 9.0).round() as usize).min(9)] as char
            })
            .collect();
        println!("{line}");
    }
    for a in &out.truth {
        let c = bev.grid.world_to_cell(a.bbox.center());
        println!("agent {} at cell ({:.1}, {:.1})", a.id, c[0], c[1]);
    }
    Ok(())
}
