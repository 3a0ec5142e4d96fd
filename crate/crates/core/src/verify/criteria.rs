//! The acceptance checks, each runnable on its own and summarized as one
//! pass/fail line.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{gradient_suite, GRAD_EPS, GRAD_TOL};
use super::oracles::{brute_force_collisions, cells_inside, energy_difference, exhaustive_assignment, sampled_min_distance};
use crate::accident::{detect_collisions, footprint, min_distance, AgentPath, CollisionEvent};
use crate::agents::{associate, Detection, TrackQuery, TrackingConfig};
use crate::bev::BevFeature;
use crate::error::Result;
use crate::fusion::{temporal_fuse, FusionBlock, TemporalState};
use crate::geometry::{warp_bev_with_mask, BevGrid, OrientedBox, Pose2D};
use crate::harness::{
    generate_scenario, id_switches, record_id, run_batch, run_pipeline, Config, FrameOutput, Models, Pipeline,
    RunRecord, Scenario, ScriptedAgent, Template,
};
use crate::tensor::probe::with_softmax_probe;
use crate::tensor::{seeded_init, InitScheme, RngSeed};

pub const GRADIENT_CASES: usize = 25;
pub const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
pub const SELFTEST_BUDGET: Duration = Duration::from_secs(600);
const SUITE_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub number: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}] {}: {}",
            self.number,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail
        )
    }
}

fn report(number: u8, title: &'static str, passed: bool, detail: String) -> CriterionReport {
    CriterionReport {
        number,
        title,
        passed,
        detail,
    }
}

/// Analytic gradients against central differences.
pub fn gradients() -> Result<CriterionReport> {
    let clock = Instant::now();
    let checks = gradient_suite(GRADIENT_CASES, RngSeed(SUITE_SEED))?;
    let elapsed = clock.elapsed();
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let ok = checks.iter().all(|c| c.passed(GRADIENT_CASES)) && elapsed < GRADIENT_BUDGET;
    let parts: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {}x {:.1e}", c.name, c.cases, c.max_rel_error))
        .collect();
    Ok(report(
        1,
        "gradient suite",
        ok,
        format!(
            "max rel error {worst:.2e} (tol {GRAD_TOL:.0e}, eps {GRAD_EPS:.0e}) in {:.1}s; {}",
            elapsed.as_secs_f64(),
            parts.join(", ")
        ),
    ))
}

/// Every softmax row of a full run on `crossing` sums to one.
pub fn attention_normalization() -> Result<CriterionReport> {
    let cfg = Config::default();
    let scenario = generate_scenario(0, Template::Crossing, &cfg)?;
    let (run, stats) = with_softmax_probe(|| run_pipeline(&scenario, &cfg));
    run?;
    let ok = stats.rows > 0 && stats.max_sum_error <= 1e-9 && stats.min_entry >= 0.0;
    Ok(report(
        2,
        "attention normalization",
        ok,
        format!(
            "{} softmax rows over {} frames, max |sum - 1| {:.1e} (tol 1e-9), min entry {:.1e}",
            stats.rows, scenario.frames, stats.max_sum_error, stats.min_entry
        ),
    ))
}

fn random_feature(h: usize, w: usize, c: usize, origin: Pose2D, seed: u64) -> Result<BevFeature> {
    let grid = BevGrid::new(h, w, 0.5, origin)?;
    BevFeature::new(grid, seeded_init(&[h, w, c], RngSeed(seed), InitScheme::Uniform(1.0))?, 0, 0)
}

/// Warp oracles and the temporal identity at the first frame.
pub fn alignment() -> Result<CriterionReport> {
    let (h, w, c) = (7, 9, 3);
    let mut shift_ok = true;
    let mut rot_err = 0.0f64;
    for seed in 0..10u64 {
        let origin = Pose2D::new(seed as f64 * 1.5 - 4.0, 2.0 - seed as f64, 0.3 * seed as f64);
        let feat = random_feature(h, w, c, origin, seed)?;
        let res = feat.grid.resolution;
        for (di, dj) in [(0i64, 1i64), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, 1)] {
            // content moves by (di, dj) cells
            let t = Pose2D::new(dj as f64 * res, di as f64 * res, 0.0);
            let (out, mask) = warp_bev_with_mask(&feat, &t);
            for i in 0..h as i64 {
                for j in 0..w as i64 {
                    let (si, sj) = (i - di, j - dj);
                    let inside = si >= 0 && sj >= 0 && si < h as i64 && sj < w as i64;
                    let got = out.cell(i as usize, j as usize);
                    let k = i as usize * w + j as usize;
                    shift_ok &= if inside {
                        got == feat.cell(si as usize, sj as usize) && mask[k] == 1.0
                    } else {
                        got.iter().all(|&v| v == 0.0) && mask[k] == 0.0
                    };
                }
            }
        }
        let (out, _) = warp_bev_with_mask(&feat, &Pose2D::new(0.0, 0.0, std::f64::consts::PI));
        for i in 0..h {
            for j in 0..w {
                for (a, b) in out.cell(i, j).iter().zip(feat.cell(h - 1 - i, w - 1 - j)) {
                    rot_err = rot_err.max((a - b).abs());
                }
            }
        }
    }

    let feat = random_feature(h, w, c, Pose2D::new(1.0, 2.0, 0.5), 99)?;
    let mut block = FusionBlock::seeded(c, 1, 4, RngSeed(5))?;
    block.gate_open = true;
    let mut identity = temporal_fuse(&feat, &TemporalState::new(), &block)? == feat;

    let mut cfg = Config::default();
    cfg.run.v2x = false;
    cfg.fusion.force_gate_open = true;
    let scenario = generate_scenario(0, Template::Crossing, &cfg)?;
    let models = Models::seeded(&cfg)?;
    let first = Pipeline::new(&scenario, &cfg, &models)?.step()?;
    identity &= first.fused == first.ego_bev;

    Ok(report(
        3,
        "alignment oracles",
        shift_ok && rot_err <= 1e-9 && identity,
        format!(
            "1-cell shifts exact: {shift_ok}; pi rotation max error {rot_err:.1e} (tol 1e-9); temporal identity at t=0: {identity}"
        ),
    ))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<TrackQuery>, Vec<Detection>) {
    let nt = rng.gen_range(0..=6);
    let nd = rng.gen_range(0..=6);
    let tracks = (0..nt)
        .map(|id| TrackQuery {
            id,
            feature: Vec::new(),
            bbox: OrientedBox::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 4.5, 2.0, 0.0),
            velocity: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            age: 1,
            coast: 0,
            score: 1.0,
            source: None,
        })
        .collect();
    let dets = (0..nd)
        .map(|_| Detection {
            bbox: OrientedBox::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), 4.5, 2.0, 0.0),
            velocity: [0.0; 2],
            score: 1.0,
            feature: Vec::new(),
            source: None,
        })
        .collect();
    (tracks, dets)
}

/// Association against exhaustive matching, and id stability with oracle
/// detections on every template.
pub fn assignment() -> Result<CriterionReport> {
    let cfg = TrackingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut mismatches = 0;
    let instances = 500;
    for _ in 0..instances {
        let (tracks, dets) = random_instance(&mut rng);
        let predicted: Vec<[f64; 2]> = tracks
            .iter()
            .map(|t| [t.bbox.x + t.velocity[0] * cfg.dt, t.bbox.y + t.velocity[1] * cfg.dt])
            .collect();
        let cost: Vec<Vec<f64>> = predicted
            .iter()
            .map(|p| dets.iter().map(|d| (d.bbox.x - p[0]).hypot(d.bbox.y - p[1])).collect())
            .collect();
        let oracle = exhaustive_assignment(&cost, cfg.gate);
        let mut next = tracks.len() as u32;
        let out = associate(&tracks, &dets, &cfg, None, &mut next);
        let mut pairs = 0;
        let mut total = 0.0;
        for t in out.iter().filter(|t| (t.id as usize) < tracks.len() && t.coast == 0) {
            let j = dets.iter().position(|d| d.bbox == t.bbox).expect("matched track carries its detection");
            pairs += 1;
            total += cost[t.id as usize][j];
        }
        let spawned = out.len() - out.iter().filter(|t| (t.id as usize) < tracks.len()).count();
        if pairs != oracle.0 || (total - oracle.1).abs() > 1e-9 || spawned != dets.len() - pairs {
            mismatches += 1;
        }
    }

    let cfg = Config::default();
    let scenarios = Template::ALL
        .iter()
        .flat_map(|&t| (0..2).map(move |s| (s, t)))
        .map(|(s, t)| generate_scenario(s, t, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let records = run_batch(&scenarios, &cfg, 0)?;
    let switches: usize = records.iter().map(id_switches).sum();
    Ok(report(
        4,
        "assignment oracle",
        mismatches == 0 && switches == 0,
        format!(
            "{mismatches}/{instances} instances differ from exhaustive matching; {switches} id switches over {} oracle-fed runs ({} templates)",
            records.len(),
            Template::ALL.len()
        ),
    ))
}

fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<AgentPath>, f64) {
    let n = rng.gen_range(1..=5);
    let frames = rng.gen_range(1..=20);
    let dt = 0.5;
    let paths = (0..n)
        .map(|id| {
            let start = Pose2D::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), rng.gen_range(-3.2..3.2));
            let dims = [rng.gen_range(0.5..5.0), rng.gen_range(0.5..2.5), 1.5];
            let mut a = ScriptedAgent::constant(id * 3 + 1, dims, start, rng.gen_range(0.0..4.0));
            a.switch_at(rng.gen_range(0..frames), rng.gen_range(0.0..4.0), rng.gen_range(-0.8..0.8));
            AgentPath {
                id: a.id,
                boxes: a.boxes(frames, dt),
            }
        })
        .collect();
    (paths, rng.gen_range(0.0..1.5))
}

/// Frame scan against brute force, polygon distance against point sampling.
pub fn collisions() -> Result<CriterionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED + 5);
    let scenes = 200;
    let mut differ = 0;
    let mut events = 0;
    for _ in 0..scenes {
        let (paths, threshold) = random_scene(&mut rng);
        let got = detect_collisions(&paths, threshold, 0)?;
        let want = brute_force_collisions(&paths, threshold, 0)?;
        events += want.len();
        if got != want {
            differ += 1;
        }
    }
    let pairs = 1000;
    let mut worst = 0.0f64;
    let mut asymmetric = 0;
    for _ in 0..pairs {
        let mut draw = || {
            OrientedBox::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.3..5.0),
                rng.gen_range(0.3..2.5),
                rng.gen_range(-3.2..3.2),
            )
        };
        let (a, b) = (draw(), draw());
        let (pa, pb) = (footprint(&a)?, footprint(&b)?);
        let d = min_distance(&pa, &pb);
        if d != min_distance(&pb, &pa) {
            asymmetric += 1;
        }
        worst = worst.max((d - sampled_min_distance(&a, &b, 1e-3)).abs());
    }
    Ok(report(
        5,
        "collision oracle",
        differ == 0 && worst <= 1e-3 && asymmetric == 0,
        format!(
            "{differ}/{scenes} scenes differ from the brute-force scan ({events} events); min_distance vs sampling max error {worst:.2e} m over {pairs} pairs (tol 1e-3), {asymmetric} asymmetric"
        ),
    ))
}

/// Constant-velocity boxes along each box's heading, which is what the
/// first (straight) anchor produces under zero-initialized decoders.
fn anchor_scan(out: &FrameOutput, cfg: &Config, ego: &ScriptedAgent) -> Result<Vec<CollisionEvent>> {
    let steps = cfg.motion.horizon;
    let dt = cfg.motion.dt;
    let path = |id: u32, b: OrientedBox, v: [f64; 2]| {
        let s = v[0].hypot(v[1]) * dt;
        let (c, sn) = (b.yaw.cos(), b.yaw.sin());
        AgentPath {
            id,
            boxes: (0..=steps)
                .map(|k| OrientedBox::new(b.x + s * k as f64 * c, b.y + s * k as f64 * sn, b.length, b.width, b.yaw))
                .collect(),
        }
    };
    let mut paths: Vec<AgentPath> = out
        .tracks
        .tracks
        .iter()
        .map(|t| path(record_id(t.id, t.source, ego.id), t.bbox, t.velocity))
        .collect();
    let e = &out.tracks.ego;
    let ego_box = OrientedBox::new(e.pose.x, e.pose.y, e.size[0], e.size[1], e.pose.yaw);
    paths.push(path(ego.id, ego_box, e.velocity));
    brute_force_collisions(&paths, cfg.accident.threshold, out.frame as u32)
}

fn same_events(a: &[CollisionEvent], b: &[CollisionEvent]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.timestamp == y.timestamp
                && x.pair() == y.pair()
                && (x.position[0] - y.position[0]).abs() <= 1e-9
                && (x.position[1] - y.position[1]).abs() <= 1e-9
                && (x.min_distance - y.min_distance).abs() <= 1e-9
        })
}

/// Ground-truth template contracts and zero-decoder predictions against the
/// anchor scan.
pub fn template_contracts() -> Result<CriterionReport> {
    let cfg = Config::default();
    let seeds = 10u64;
    let mut bad = Vec::new();
    for t in [Template::Crossing, Template::Merging, Template::Benign] {
        for seed in 0..seeds {
            let n = generate_scenario(seed, t, &cfg)?.ground_truth_events(cfg.accident.threshold)?.len();
            if n != t.expected_collisions() {
                bad.push(format!("{t}/{seed}: {n} events"));
            }
        }
    }

    let scenario = generate_scenario(0, Template::EgoCrossing, &cfg)?;
    let models = Models::seeded(&cfg)?;
    let mut pipeline = Pipeline::new(&scenario, &cfg, &models)?;
    let mut frames_differ = 0;
    let mut predicted = 0;
    let mut ego_warned = false;
    for _ in 0..scenario.frames {
        let out = pipeline.step()?;
        let oracle = anchor_scan(&out, &cfg, &scenario.ego)?;
        predicted += out.events.len();
        ego_warned |= out.events.iter().any(|e| e.id_a == scenario.ego.id);
        if !same_events(&out.events, &oracle) {
            frames_differ += 1;
        }
    }
    let ok = bad.is_empty() && frames_differ == 0 && predicted > 0 && ego_warned;
    Ok(report(
        6,
        "template contracts",
        ok,
        format!(
            "crossing/merging one event, benign none over {seeds} seeds each ({}); ego-into-conflict crossing: {frames_differ}/{} frames differ from the anchor scan, {predicted} predicted events, ego warned: {ego_warned}",
            if bad.is_empty() { "all hold".to_string() } else { bad.join("; ") },
            scenario.frames
        ),
    ))
}

fn record_bytes(r: &RunRecord) -> Vec<(&'static str, String)> {
    r.files()
}

/// Identical reruns and thread-count independence.
pub fn determinism() -> Result<CriterionReport> {
    let cfg = Config::default();
    let scenario = generate_scenario(11, Template::Crossing, &cfg)?;
    let a = record_bytes(&run_pipeline(&scenario, &cfg)?);
    let b = record_bytes(&run_pipeline(&scenario, &cfg)?);
    let rerun = a == b;
    let batch: Vec<Scenario> = [Template::Crossing, Template::Merging, Template::Benign]
        .into_iter()
        .map(|t| generate_scenario(3, t, &cfg))
        .collect::<Result<_>>()?;
    let one: Vec<_> = run_batch(&batch, &cfg, 1)?.iter().map(record_bytes).collect();
    let four: Vec<_> = run_batch(&batch, &cfg, 4)?.iter().map(record_bytes).collect();
    let threads = one == four;
    let bytes: usize = a.iter().map(|(_, t)| t.len()).sum();
    Ok(report(
        7,
        "determinism",
        rerun && threads,
        format!(
            "rerun byte-identical: {rerun} ({bytes} bytes); {} scenarios identical on 1 and 4 threads: {threads}",
            batch.len()
        ),
    ))
}

fn first_frame(scenario: &Scenario, cfg: &Config, models: &Models) -> Result<FrameOutput> {
    Pipeline::new(scenario, cfg, models)?.step()
}

/// Zero-mask pass-through and the occluded-agent energy gain.
pub fn ego_preservation() -> Result<CriterionReport> {
    let cfg = Config::default();
    let mut scenario = generate_scenario(0, Template::Crossing, &cfg)?;
    scenario.infrastructure = Pose2D::new(1e4, 1e4, 0.0);
    let mut off = cfg.clone();
    off.run.v2x = false;
    let models = Models::seeded(&cfg)?;
    let mut coop = Pipeline::new(&scenario, &cfg, &models)?;
    let mut ego = Pipeline::new(&scenario, &off, &models)?;
    let mut identical = true;
    let mut masked_out = true;
    for _ in 0..scenario.frames {
        let (a, b) = (coop.step()?, ego.step()?);
        masked_out &= a.v2x.as_ref().is_some_and(|x| x.mask.iter().all(|&m| m == 0.0));
        identical &= a.fused == b.fused && a.tracks == b.tracks && a.motion == b.motion && a.events == b.events;
    }

    let mut open = cfg.clone();
    open.fusion.force_gate_open = true;
    let mut open_off = open.clone();
    open_off.run.v2x = false;
    let models = Models::seeded(&open)?;
    let with = generate_scenario(0, Template::Occluded, &open)?;
    let hidden = with.agents.iter().find(|a| a.id == 2).expect("occluded car").clone();
    let mut without = with.clone();
    without.agents.retain(|a| a.id != hidden.id);
    let coop_with = first_frame(&with, &open, &models)?.fused;
    let coop_without = first_frame(&without, &open, &models)?.fused;
    let ego_with = first_frame(&with, &open_off, &models)?.fused;
    let ego_without = first_frame(&without, &open_off, &models)?.fused;
    let cells = cells_inside(&coop_with, &hidden.boxes(1, with.dt)[0]);
    let e_coop = energy_difference(&coop_with, &coop_without, &cells);
    let e_ego = energy_difference(&ego_with, &ego_without, &cells);
    let gain = !cells.is_empty() && e_coop > e_ego;
    Ok(report(
        8,
        "ego preservation",
        identical && masked_out && gain,
        format!(
            "all-zero mask on {} frames: {masked_out}, cooperative == ego branch bitwise: {identical}; occluded agent ({} cells) energy cooperative {e_coop:.4e} vs ego-only {e_ego:.4e}",
            scenario.frames,
            cells.len()
        ),
    ))
}

/// Criteria 1 to 8 in order.
pub fn run_selftest() -> Result<Vec<CriterionReport>> {
    let runners: [fn() -> Result<CriterionReport>; 8] = [
        gradients,
        attention_normalization,
        alignment,
        assignment,
        collisions,
        template_contracts,
        determinism,
        ego_preservation,
    ];
    runners.iter().map(|r| r()).collect()
}

/// Runs criteria 1 to 8 and adds the runtime criterion.
pub fn run_selftest_timed() -> Result<(Vec<CriterionReport>, Duration)> {
    let clock = Instant::now();
    let mut reports = run_selftest()?;
    let elapsed = clock.elapsed();
    reports.push(report(
        9,
        "selftest runtime",
        elapsed < SELFTEST_BUDGET,
        format!(
            "criteria 1-8 took {:.1}s (budget {}s) at default sizes",
            elapsed.as_secs_f64(),
            SELFTEST_BUDGET.as_secs()
        ),
    ));
    Ok((reports, elapsed))
}
