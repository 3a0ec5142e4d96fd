//! Shows the roadside feature exchange on the occluded template: message
//! size, aligned coverage, and how much the hidden car changes the fused map
//! with and without the roadside unit.
//!
//! `cargo run --release --example v2x_fusion -- [seed]`

use coopdrive::harness::{generate_scenario, Config, Models, Pipeline, Scenario, Template};
use coopdrive::verify::{cells_inside, energy_difference};

fn fused_at(s: &Scenario, cfg: &Config, models: &Models, t: usize) -> coopdrive::Result<coopdrive::harness::FrameOutput> {
    let mut p = Pipeline::new(s, cfg, models)?;
    let mut out = p.step()?;
    while out.frame < t {
        out = p.step()?;
    }
    Ok(out)
}

fn main() -> coopdrive::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = Config::default();
    cfg.fusion.force_gate_open = true;
    let models = Models::seeded(&cfg)?;
    let with = generate_scenario(seed, Template::Occluded, &cfg)?;
    let hidden = with.agents.iter().max_by(|a, b| a.start.x.total_cmp(&b.start.x)).unwrap().id;
    let mut without = with.clone();
    without.agents.retain(|a| a.id != hidden);

    let t = 2;
    let coop = fused_at(&with, &cfg, &models, t)?;
    let x = coop.v2x.as_ref().expect("v2x is on");
    println!(
        "message from agent {} at frame {}: {} bytes, {} of {} cells covered after alignment",
        x.message.agent_id,
        x.message.timestamp,
        x.encoded.len(),
        x.mask.iter().filter(|&&m| m > 0.0).count(),
        x.mask.len()
    );

    let car = with.states(t).into_iter().find(|a| a.id == hidden).unwrap();
    let cells = cells_inside(&coop.fused, &car.bbox);
    let coop_without = fused_at(&without, &cfg, &models, t)?;
    let mut ego_cfg = cfg.clone();
    ego_cfg.run.v2x = false;
    let ego_with = fused_at(&with, &ego_cfg, &models, t)?;
    let ego_without = fused_at(&without, &ego_cfg, &models, t)?;
    println!("hidden car {hidden} covers {} cells", cells.len());
    println!(
        "feature change caused by the car: cooperative {:.4e}, ego only {:.4e}",
        energy_difference(&coop.fused, &coop_without.fused, &cells),
        energy_difference(&ego_with.fused, &ego_without.fused, &cells)
    );
    Ok(())
}
