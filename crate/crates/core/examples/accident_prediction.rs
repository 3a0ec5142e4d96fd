//! Streams collision warnings frame by frame on the ego crossing template
//! and scores the first warnings against ground truth.
//!
//! `cargo run --release --example accident_prediction -- [seed] [threshold]`

use coopdrive::accident::{first_warnings, score};
use coopdrive::harness::{generate_scenario, Config, Models, Pipeline, Template, EGO_ID};

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = Config::default();
    if let Some(t) = args.next().and_then(|s| s.parse().ok()) {
        cfg.accident.threshold = t;
    }
    cfg.validate()?;
    let s = generate_scenario(seed, Template::EgoCrossing, &cfg)?;
    let gt = s.ground_truth_events(cfg.accident.threshold)?;
    let models = Models::seeded(&cfg)?;
    let mut p = Pipeline::new(&s, &cfg, &models)?;
    let mut per_frame = Vec::new();
    for _ in 0..s.frames {
        let out = p.step()?;
        let ego: Vec<_> = out.events.iter().filter(|e| e.id_a == EGO_ID).collect();
        match ego.first() {
            Some(e) => println!("frame {:2}: ego warned about agent {} at t={}", out.frame, e.id_b, e.timestamp),
            None => println!("frame {:2}: clear", out.frame),
        }
        per_frame.push(out.events);
    }
    let pred = first_warnings(&per_frame);
    for e in &gt {
        println!("ground truth {e}");
    }
    let sc = score(&pred, &gt, cfg.accident.time_tol, cfg.accident.dist_tol);
    println!(
        "tp {} fp {} fn {} over {} predicted pairs",
        sc.true_positives,
        sc.false_positives,
        sc.false_negatives,
        pred.len()
    );
    Ok(())
}
