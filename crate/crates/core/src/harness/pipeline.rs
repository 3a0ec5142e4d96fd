use std::time::Instant;

use super::record::{FrameRecord, RunRecord, StageTiming};
use super::render::{render_views, Viewpoint};
use super::scenario::{AgentState, Scenario, INFRA_ID};
use super::Config;
use crate::accident::{first_warnings, predict_accident, CollisionEvent};
use crate::agents::{
    oracle_detections, predict_motion, step_perception, AnchorSet, MotionOutput, MotionWeights, PerceptionState,
    TrackSet, TrackingWeights, EGO_TRACK_ID,
};
use crate::bev::{encode_bev, BevEncoderWeights, BevFeature};
use crate::error::{Error, Result};
use crate::fusion::{align_infrastructure, temporal_fuse, v2x_fuse, FusionWeights, TemporalState, V2xMessage};
use crate::geometry::Pose2D;
use crate::tensor::RngSeed;

/// Ids of tracks without a known ground-truth source are offset by this in
/// records and events, so they never collide with scenario ids.
pub const UNMATCHED_ID_BASE: u32 = 1_000_000;

/// Every network weight of the pipeline, derived from one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub ego_encoder: BevEncoderWeights,
    pub infra_encoder: BevEncoderWeights,
    pub fusion: FusionWeights,
    pub tracking: TrackingWeights,
    pub motion: MotionWeights,
}

impl Models {
    pub fn seeded(cfg: &Config) -> Result<Self> {
        let seed = RngSeed(cfg.run.model_seed);
        let grid = cfg.grid_at(Pose2D::IDENTITY);
        let c = cfg.encoder.channels;
        Ok(Self {
            ego_encoder: BevEncoderWeights::seeded(&cfg.encoder, &grid, seed.derive("ego_encoder"))?,
            infra_encoder: BevEncoderWeights::seeded(&cfg.encoder, &grid, seed.derive("infra_encoder"))?,
            fusion: FusionWeights::seeded(&cfg.fusion, c, seed.derive("fusion"))?,
            tracking: TrackingWeights::seeded(&cfg.tracking, c, seed.derive("tracking"))?,
            motion: MotionWeights::seeded(&cfg.motion, c, seed.derive("motion"))?,
        })
    }
}

/// What the infrastructure sent in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct V2xExchange {
    pub message: V2xMessage,
    pub encoded: Vec<u8>,
    pub mask: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: usize,
    pub ego_pose: Pose2D,
    pub truth: Vec<AgentState>,
    /// encoder output of the ego cameras
    pub ego_bev: BevFeature,
    /// after temporal and (when enabled) V2X fusion
    pub fused: BevFeature,
    pub v2x: Option<V2xExchange>,
    pub tracks: TrackSet,
    /// ids already mapped to scenario ids, see [`record_id`]
    pub motion: MotionOutput,
    /// world frame, scenario ids
    pub events: Vec<CollisionEvent>,
}

/// Scenario id a track is reported under: the ego keeps its scenario id,
/// tracks take the ground-truth id they were last matched to.
pub fn record_id(track_id: u32, source: Option<u32>, ego_id: u32) -> u32 {
    if track_id == EGO_TRACK_ID {
        ego_id
    } else {
        source.unwrap_or(UNMATCHED_ID_BASE + track_id)
    }
}

fn map_ids(motion: &MotionOutput, tracks: &TrackSet, ego_id: u32) -> MotionOutput {
    let mut out = motion.clone();
    let mut used = vec![ego_id];
    for a in &mut out.agents {
        let source = tracks.tracks.iter().find(|t| t.id == a.id).and_then(|t| t.source);
        // two tracks claiming one source keep their own ids
        let mut id = record_id(a.id, source, ego_id);
        if a.id != EGO_TRACK_ID && used.contains(&id) {
            id = UNMATCHED_ID_BASE + a.id;
        }
        used.push(id);
        a.id = id;
    }
    out
}

/// One scenario's pipeline instance, stepped frame by frame.
pub struct Pipeline<'a> {
    cfg: &'a Config,
    models: &'a Models,
    scenario: &'a Scenario,
    anchors: AnchorSet,
    temporal: TemporalState,
    perception: PerceptionState,
    next_frame: usize,
    pub timing: StageTiming,
}

impl<'a> Pipeline<'a> {
    pub fn new(scenario: &'a Scenario, cfg: &'a Config, models: &'a Models) -> Result<Self> {
        cfg.validate()?;
        scenario.validate()?;
        if (scenario.dt - cfg.scenario.dt).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "scenario dt {} differs from configured dt {}",
                scenario.dt, cfg.scenario.dt
            )));
        }
        Ok(Self {
            cfg,
            models,
            scenario,
            anchors: cfg.motion.anchors(),
            temporal: TemporalState::new(),
            perception: PerceptionState::new(&models.tracking, scenario.ego_pose(0), scenario.ego.size()),
            next_frame: 0,
            timing: StageTiming::default(),
        })
    }

    pub fn next_frame(&self) -> usize {
        self.next_frame
    }

    fn exchange(&mut self, t: usize, ego_pose: &Pose2D) -> Result<(BevFeature, V2xExchange)> {
        let clock = Instant::now();
        let images = render_views(self.scenario, t, Viewpoint::Infrastructure)?;
        self.timing.render += clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        let infra_pose = self.scenario.infrastructure;
        let grid = self.cfg.grid_at(infra_pose);
        let rig = &self.scenario.infra_rig;
        let bev = encode_bev(&images, rig, &grid, &self.models.infra_encoder, INFRA_ID)?;
        self.timing.encode += clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        let message = V2xMessage::from_feature(&bev);
        let encoded = message.encode();
        let received = V2xMessage::decode(&encoded)?.to_feature()?;
        let (aligned, mask) = align_infrastructure(&received, &received.grid.origin, ego_pose);
        self.timing.fusion += clock.elapsed().as_secs_f64();
        Ok((aligned, V2xExchange { message, encoded, mask }))
    }

    /// Runs frame `next_frame()` end to end.
    pub fn step(&mut self) -> Result<FrameOutput> {
        let t = self.next_frame;
        self.step_inner(t).map_err(|e| e.at_frame(t))
    }

    fn step_inner(&mut self, t: usize) -> Result<FrameOutput> {
        let cfg = self.cfg;
        let ego_pose = self.scenario.ego_pose(t);
        let grid = cfg.grid_at(ego_pose);

        let clock = Instant::now();
        let images = render_views(self.scenario, t, Viewpoint::Ego)?;
        self.timing.render += clock.elapsed().as_secs_f64();
        let clock = Instant::now();
        let ego_bev = encode_bev(&images, &self.scenario.ego_rig, &grid, &self.models.ego_encoder, self.scenario.ego.id)?;
        self.timing.encode += clock.elapsed().as_secs_f64();

        let infra = if cfg.run.v2x { Some(self.exchange(t, &ego_pose)?) } else { None };

        let clock = Instant::now();
        let fw = &self.models.fusion;
        let temporal = |x: &BevFeature, state: &TemporalState| -> Result<BevFeature> {
            if cfg.fusion.temporal {
                temporal_fuse(x, state, &fw.temporal)
            } else {
                Ok(x.clone())
            }
        };
        let cooperative = |x: &BevFeature| -> Result<BevFeature> {
            match &infra {
                Some((aligned, ex)) => v2x_fuse(x, aligned, &ex.mask, &fw.v2x),
                None => Ok(x.clone()),
            }
        };
        let fused = if cfg.fusion.v2x_first {
            temporal(&cooperative(&ego_bev)?, &self.temporal)?
        } else {
            cooperative(&temporal(&ego_bev, &self.temporal)?)?
        };
        self.temporal.push(&fused);
        self.timing.fusion += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let truth = self.scenario.states(t);
        let ego_id = self.scenario.ego.id;
        let supplied = cfg.tracking.oracle_detections.then(|| {
            let others: Vec<_> = truth
                .iter()
                .filter(|s| s.id != ego_id)
                .map(|s| (s.id, s.bbox, s.velocity))
                .collect();
            oracle_detections(&fused, &others)
        });
        self.perception.ego.velocity = self.scenario.ego.velocities(t + 1, self.scenario.dt)[t];
        let tracks = step_perception(&fused, &mut self.perception, &self.models.tracking, &cfg.tracking, supplied)?;
        self.timing.perception += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let raw = predict_motion(&tracks, &fused, &self.anchors, &self.models.motion, cfg.motion.modes)?;
        let motion = map_ids(&raw, &tracks, ego_id);
        self.timing.motion += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let events = predict_accident(&motion, cfg.accident.threshold, cfg.accident.mode_policy)?
            .iter()
            .map(|e| e.transformed(&motion.frame))
            .collect();
        self.timing.accident += clock.elapsed().as_secs_f64();

        self.next_frame += 1;
        Ok(FrameOutput {
            frame: t,
            ego_pose,
            truth,
            ego_bev,
            fused,
            v2x: infra.map(|(_, ex)| ex),
            tracks,
            motion,
            events,
        })
    }
}

/// Runs every frame of `scenario` and collects the record, with models
/// seeded from the config.
pub fn run_pipeline(scenario: &Scenario, cfg: &Config) -> Result<RunRecord> {
    let models = Models::seeded(cfg)?;
    run_pipeline_with(scenario, cfg, &models)
}

pub fn run_pipeline_with(scenario: &Scenario, cfg: &Config, models: &Models) -> Result<RunRecord> {
    let mut pipeline = Pipeline::new(scenario, cfg, models)?;
    let mut frames = Vec::with_capacity(scenario.frames);
    let mut per_frame = Vec::with_capacity(scenario.frames);
    for _ in 0..scenario.frames {
        let out = pipeline.step()?;
        per_frame.push(out.events.clone());
        frames.push(FrameRecord::from_output(&out));
    }
    let events_gt = scenario.ground_truth_events(cfg.accident.threshold)?;
    Ok(RunRecord {
        seed: scenario.seed,
        template: scenario.template,
        config: cfg.clone(),
        scenario: scenario.clone(),
        frames,
        events_pred: first_warnings(&per_frame),
        events_gt,
        timing: Some(pipeline.timing),
    })
}

/// Runs independent scenarios on a pool of `threads` workers (0 picks the
/// rayon default). Results come back in input order.
pub fn run_batch(scenarios: &[Scenario], cfg: &Config, threads: usize) -> Result<Vec<RunRecord>> {
    use rayon::prelude::*;
    let models = Models::seeded(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        scenarios
            .par_iter()
            .map(|s| run_pipeline_with(s, cfg, &models))
            .collect()
    })
}
