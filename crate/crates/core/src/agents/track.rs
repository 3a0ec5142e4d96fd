use super::detect::{detect, Detection, DetectorWeights};
use super::{gated_assignment, TrackingConfig};
use crate::bev::{deformable_attention, BevFeature, DeformableAttnParams};
use crate::error::Result;
use crate::geometry::{OrientedBox, Pose2D};
use crate::nn::MultiHeadAttention;
use crate::tensor::{DenseTensor, RngSeed};

/// Id under which the ego vehicle appears next to tracked agents.
pub const EGO_TRACK_ID: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackQuery {
    pub id: u32,
    pub feature: Vec<f64>,
    /// world frame
    pub bbox: OrientedBox,
    /// world frame, m/s
    pub velocity: [f64; 2],
    /// frames since the track was spawned
    pub age: u32,
    /// consecutive frames without a matching detection
    pub coast: u32,
    pub score: f64,
    /// ground-truth id of the last matched detection, when known
    pub source: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoQuery {
    pub feature: Vec<f64>,
    pub pose: Pose2D,
    /// world frame, m/s
    pub velocity: [f64; 2],
    /// length and width, meters
    pub size: [f64; 2],
}

/// Per-frame perception result: agent queries plus the ego query.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub tracks: Vec<TrackQuery>,
    pub ego: EgoQuery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingWeights {
    pub detector: DetectorWeights,
    /// track/detection feature interaction on a match
    pub update: MultiHeadAttention,
    pub ego_init: Vec<f64>,
    pub ego_attn: DeformableAttnParams,
}

impl TrackingWeights {
    pub fn seeded(cfg: &TrackingConfig, channels: usize, seed: RngSeed) -> Result<Self> {
        Ok(Self {
            detector: DetectorWeights::seeded(cfg, channels, seed.derive("detector"))?,
            update: MultiHeadAttention::seeded(channels, cfg.heads, seed.derive("update"))?,
            ego_init: crate::tensor::seeded_init(&[channels], seed.derive("ego"), crate::tensor::InitScheme::Uniform(0.5))?
                .into_data(),
            ego_attn: DeformableAttnParams::seeded(channels, cfg.heads, 1, cfg.sample_points, seed.derive("ego_attn"))?,
        })
    }
}

/// Tracker state owned by one pipeline instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionState {
    pub tracks: Vec<TrackQuery>,
    pub ego: EgoQuery,
    next_id: u32,
}

impl PerceptionState {
    pub fn new(weights: &TrackingWeights, ego_pose: Pose2D, ego_size: [f64; 2]) -> Self {
        Self {
            tracks: Vec::new(),
            ego: EgoQuery {
                feature: weights.ego_init.clone(),
                pose: ego_pose,
                velocity: [0.0, 0.0],
                size: ego_size,
            },
            next_id: 0,
        }
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn snapshot(&self) -> TrackSet {
        TrackSet {
            tracks: self.tracks.clone(),
            ego: self.ego.clone(),
        }
    }
}

fn predicted_center(t: &TrackQuery, dt: f64) -> [f64; 2] {
    [t.bbox.x + t.velocity[0] * dt, t.bbox.y + t.velocity[1] * dt]
}

/// Matches detections to the tracks' predicted positions, refreshes matched
/// tracks, coasts or retires unmatched ones and spawns new ids for
/// unmatched detections in detection order. Detections are in the world
/// frame. Ids come from `next_id` and are never reused.
pub fn associate(
    tracks: &[TrackQuery],
    detections: &[Detection],
    cfg: &TrackingConfig,
    update: Option<&MultiHeadAttention>,
    next_id: &mut u32,
) -> Vec<TrackQuery> {
    let cost: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| {
            let p = predicted_center(t, cfg.dt);
            detections
                .iter()
                .map(|d| (d.bbox.x - p[0]).hypot(d.bbox.y - p[1]))
                .collect()
        })
        .collect();
    let pairs = gated_assignment(&cost, cfg.gate);
    let mut det_of = vec![None; tracks.len()];
    let mut taken = vec![false; detections.len()];
    for &(i, j) in &pairs {
        det_of[i] = Some(j);
        taken[j] = true;
    }

    let mut out = Vec::with_capacity(tracks.len() + detections.len());
    for (t, m) in tracks.iter().zip(&det_of) {
        let mut t = t.clone();
        match *m {
            Some(j) => {
                let d = &detections[j];
                if let Some(attn) = update {
                    let ctx = [t.feature.clone(), d.feature.clone()];
                    let delta = attn.forward(&[t.feature.clone()], &ctx).remove(0);
                    for (f, u) in t.feature.iter_mut().zip(delta) {
                        *f += u;
                    }
                }
                t.bbox = d.bbox;
                t.velocity = d.velocity;
                t.score = d.score;
                t.source = d.source.or(t.source);
                t.age += 1;
                t.coast = 0;
            }
            None => {
                let p = predicted_center(&t, cfg.dt);
                t.bbox.x = p[0];
                t.bbox.y = p[1];
                t.age += 1;
                t.coast += 1;
                if t.coast > cfg.max_coast {
                    continue;
                }
            }
        }
        out.push(t);
    }
    for (d, _) in detections.iter().zip(&taken).filter(|(_, &tk)| !tk) {
        out.push(TrackQuery {
            id: *next_id,
            feature: d.feature.clone(),
            bbox: d.bbox,
            velocity: d.velocity,
            age: 0,
            coast: 0,
            score: d.score,
            source: d.source,
        });
        *next_id += 1;
    }
    if out.len() > cfg.det_queries {
        // keep the most recently confirmed tracks; stable for equal coast
        let mut order: Vec<usize> = (0..out.len()).collect();
        order.sort_by_key(|&k| out[k].coast);
        let mut keep = vec![false; out.len()];
        for &k in order.iter().take(cfg.det_queries) {
            keep[k] = true;
        }
        let mut k = 0;
        out.retain(|_| {
            k += 1;
            keep[k - 1]
        });
    }
    out
}

/// Detect (or take the supplied detections), associate, then refresh the
/// ego query from the BEV around the ego cell. Supplied detections are in
/// the world frame; detector output is converted from the BEV frame.
pub fn step_perception(
    bev: &BevFeature,
    state: &mut PerceptionState,
    weights: &TrackingWeights,
    cfg: &TrackingConfig,
    supplied: Option<Vec<Detection>>,
) -> Result<TrackSet> {
    let detections = match supplied {
        Some(d) => d,
        None => detect(bev, &weights.detector, cfg.score_threshold)?
            .into_iter()
            .map(|d| d.to_world(&bev.grid.origin))
            .collect(),
    };
    state.tracks = associate(&state.tracks, &detections, cfg, Some(&weights.update), &mut state.next_id);

    let c = bev.channels();
    let q = DenseTensor::new([1, c], state.ego.feature.clone())?;
    let center = bev.grid.center_index();
    let delta = deformable_attention(&q, &[&bev.data], &[center], &weights.ego_attn)?;
    for (f, u) in state.ego.feature.iter_mut().zip(delta.row(0)) {
        *f += u;
    }
    state.ego.pose = bev.grid.origin;
    Ok(state.snapshot())
}
