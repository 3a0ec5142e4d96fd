use super::{MotionConfig, TrackSet, EGO_TRACK_ID};
use crate::bev::{deformable_attention, BevFeature, DeformableAttnParams};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose2D};
use crate::nn::{Linear, Mlp, MultiHeadAttention};
use crate::tensor::{softmax_row_in_place, DenseTensor, RngSeed};

/// Constant-speed arc templates, one per mode, starting at the origin and
/// heading along +x.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    /// path curvature per mode, 1/m
    pub curvatures: Vec<f64>,
    pub horizon: usize,
    /// seconds per step
    pub dt: f64,
}

impl AnchorSet {
    pub fn new(curvatures: Vec<f64>, horizon: usize, dt: f64) -> Self {
        Self {
            curvatures,
            horizon,
            dt,
        }
    }

    pub fn modes(&self) -> usize {
        self.curvatures.len()
    }

    /// Mode `k` at `speed` m/s: positions after steps `1..=horizon`.
    pub fn template(&self, k: usize, speed: f64) -> Vec<[f64; 2]> {
        let kappa = self.curvatures[k];
        (1..=self.horizon)
            .map(|t| {
                let s = speed * self.dt * t as f64;
                if kappa.abs() < 1e-12 {
                    [s, 0.0]
                } else {
                    [(kappa * s).sin() / kappa, (1.0 - (kappa * s).cos()) / kappa]
                }
            })
            .collect()
    }

    /// Scene-level anchor: the template in the prediction frame as is.
    pub fn scene_anchor(&self, k: usize, speed: f64) -> Vec<[f64; 2]> {
        self.template(k, speed)
    }

    /// Agent-level anchor: the template rotated into the agent's heading and
    /// started at its position (both in the prediction frame).
    pub fn agent_anchor(&self, k: usize, speed: f64, agent: &Pose2D) -> Vec<[f64; 2]> {
        self.template(k, speed)
            .into_iter()
            .map(|p| agent.transform_point(p))
            .collect()
    }
}

/// Sinusoidal embedding of a planar position into `c` channels (`c / 4`
/// geometric frequencies per axis, sine and cosine).
pub fn position_encoding(p: [f64; 2], c: usize) -> Vec<f64> {
    let n = (c / 4).max(1);
    let mut out = vec![0.0; c];
    for i in 0..n {
        let freq = 1.0 / 100f64.powf(i as f64 / n as f64);
        for (axis, &x) in p.iter().enumerate() {
            let base = 4 * i + 2 * axis;
            if base + 1 < c {
                out[base] = (x * freq).sin();
                out[base + 1] = (x * freq).cos();
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionWeights {
    pub interaction: MultiHeadAttention,
    pub goal_attn: DeformableAttnParams,
    pub context: Mlp,
    /// projections of scene anchor end, agent anchor end, current position
    /// and predicted endpoint encodings
    pub pos_scene: Linear,
    pub pos_agent: Linear,
    pub pos_current: Linear,
    pub pos_endpoint: Linear,
    pub endpoint_head: Linear,
    pub trajectory_head: Linear,
    pub score_head: Linear,
}

impl MotionWeights {
    /// Random encoders, zero decoders: predictions start on the anchors with
    /// uniform mode scores.
    pub fn seeded(cfg: &MotionConfig, channels: usize, seed: RngSeed) -> Result<Self> {
        Ok(Self {
            interaction: MultiHeadAttention::seeded(channels, cfg.heads, seed.derive("interaction"))?,
            goal_attn: DeformableAttnParams::seeded(channels, cfg.heads, 1, cfg.sample_points, seed.derive("goal"))?,
            context: Mlp::seeded(2 * channels, cfg.ffn_hidden, channels, seed.derive("context")),
            pos_scene: Linear::seeded(channels, channels, seed.derive("pos_scene")),
            pos_agent: Linear::seeded(channels, channels, seed.derive("pos_agent")),
            pos_current: Linear::seeded(channels, channels, seed.derive("pos_current")),
            pos_endpoint: Linear::seeded(channels, channels, seed.derive("pos_endpoint")),
            endpoint_head: Linear::zeros(channels, 2),
            trajectory_head: Linear::zeros(channels, 2 * cfg.horizon),
            score_head: Linear::zeros(channels, 1),
        })
    }
}

/// The pieces a motion query is assembled from, for one agent and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionQueryParts {
    pub q_a: Vec<f64>,
    pub q_g: Vec<f64>,
    pub q_ctx: Vec<f64>,
    pub q_pos: Vec<f64>,
    pub agent_anchor_end: [f64; 2],
    pub predicted_end: [f64; 2],
    /// encodings fed to the agent-anchor and endpoint projections
    pub agent_anchor_encoding: Vec<f64>,
    pub endpoint_encoding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMotion {
    /// track id, or [`EGO_TRACK_ID`]
    pub id: u32,
    /// current box in the prediction frame
    pub current: OrientedBox,
    /// `K x T` positions in the prediction frame
    pub trajectories: Vec<Vec<[f64; 2]>>,
    pub scores: Vec<f64>,
    pub parts: Vec<MotionQueryParts>,
}

impl AgentMotion {
    /// Highest-scoring mode; the lowest index wins ties.
    pub fn top_mode(&self) -> usize {
        let mut best = 0;
        for (k, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = k;
            }
        }
        best
    }
}

/// Trajectory fans for every tracked agent followed by the ego vehicle, in
/// the ego frame at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionOutput {
    pub frame: Pose2D,
    pub timestamp: u32,
    pub agents: Vec<AgentMotion>,
}

impl MotionOutput {
    pub fn ego(&self) -> Option<&AgentMotion> {
        self.agents.iter().find(|a| a.id == EGO_TRACK_ID)
    }
}

fn speed(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Predicts `K x T` trajectories per agent. Each mode's query combines the
/// agent feature with interaction (attention over all agent queries), goal
/// (deformable attention into the BEV at the anchor endpoint), their fused
/// context and four positional encodings; the decoders add offsets to the
/// agent-level anchor and score the modes.
pub fn predict_motion(
    tracks: &TrackSet,
    bev: &BevFeature,
    anchors: &AnchorSet,
    weights: &MotionWeights,
    modes: usize,
) -> Result<MotionOutput> {
    if modes == 0 || anchors.horizon == 0 {
        return Err(Error::invalid("modes and horizon must be >= 1"));
    }
    if modes > anchors.modes() {
        return Err(Error::invalid(format!(
            "{modes} modes requested but only {} anchors configured",
            anchors.modes()
        )));
    }
    if weights.trajectory_head.dout() != 2 * anchors.horizon {
        return Err(Error::shape(
            "trajectory head",
            &[weights.trajectory_head.dout()],
            &[2 * anchors.horizon],
        ));
    }
    let c = bev.channels();
    let frame = bev.grid.origin;
    let to_local = frame.inverse();

    let mut subjects: Vec<(u32, OrientedBox, [f64; 2], &[f64])> = tracks
        .tracks
        .iter()
        .map(|t| (t.id, t.bbox.transformed(&to_local), t.velocity, t.feature.as_slice()))
        .collect();
    let ego_box = OrientedBox::new(0.0, 0.0, tracks.ego.size[0], tracks.ego.size[1], 0.0).with_pose(&to_local.compose(&tracks.ego.pose));
    subjects.push((EGO_TRACK_ID, ego_box, tracks.ego.velocity, tracks.ego.feature.as_slice()));
    let context: Vec<Vec<f64>> = subjects.iter().map(|s| s.3.to_vec()).collect();

    let mut agents = Vec::with_capacity(subjects.len());
    for &(id, current, velocity, feature) in &subjects {
        let v = speed(velocity);
        let pose = current.pose();
        let mut queries = Vec::with_capacity(modes);
        let mut pos_terms = Vec::with_capacity(modes);
        let mut anchor_paths = Vec::with_capacity(modes);
        let mut partial = Vec::with_capacity(modes);
        for k in 0..modes {
            let scene_end = *anchors.scene_anchor(k, v).last().unwrap();
            let path = anchors.agent_anchor(k, v, &pose);
            let agent_end = *path.last().unwrap();
            let agent_enc = position_encoding(agent_end, c);
            let mut q_pos = weights.pos_scene.apply_vec(&position_encoding(scene_end, c));
            add(&mut q_pos, &weights.pos_agent.apply_vec(&agent_enc));
            add(&mut q_pos, &weights.pos_current.apply_vec(&position_encoding(current.center(), c)));
            let mut q0 = feature.to_vec();
            add(&mut q0, &q_pos);
            let d = weights.endpoint_head.apply_vec(&q0);
            let predicted_end = [agent_end[0] + d[0], agent_end[1] + d[1]];
            let end_enc = position_encoding(predicted_end, c);
            add(&mut q_pos, &weights.pos_endpoint.apply_vec(&end_enc));
            let mut q = feature.to_vec();
            add(&mut q, &q_pos);
            queries.push(q);
            pos_terms.push(q_pos);
            partial.push((agent_end, predicted_end, agent_enc, end_enc));
            anchor_paths.push(path);
        }

        let q_a = weights.interaction.forward(&queries, &context);
        let qm = DenseTensor::from_rows(&queries)?;
        let refs: Vec<[f64; 2]> = partial.iter().map(|p| bev.grid.local_to_cell(p.0)).collect();
        let q_g = deformable_attention(&qm, &[&bev.data], &refs, &weights.goal_attn)?;

        let mut trajectories = Vec::with_capacity(modes);
        let mut logits = Vec::with_capacity(modes);
        let mut parts = Vec::with_capacity(modes);
        for k in 0..modes {
            let mut cat = q_a[k].clone();
            cat.extend_from_slice(q_g.row(k));
            let q_ctx = weights.context.apply_vec(&cat);
            let mut q_x = q_ctx.clone();
            add(&mut q_x, &pos_terms[k]);
            let off = weights.trajectory_head.apply_vec(&q_x);
            trajectories.push(
                anchor_paths[k]
                    .iter()
                    .enumerate()
                    .map(|(t, p)| [p[0] + off[2 * t], p[1] + off[2 * t + 1]])
                    .collect(),
            );
            logits.push(weights.score_head.apply_vec(&q_x)[0]);
            let (agent_anchor_end, predicted_end, agent_anchor_encoding, endpoint_encoding) = partial[k].clone();
            parts.push(MotionQueryParts {
                q_a: q_a[k].clone(),
                q_g: q_g.row(k).to_vec(),
                q_ctx,
                q_pos: pos_terms[k].clone(),
                agent_anchor_end,
                predicted_end,
                agent_anchor_encoding,
                endpoint_encoding,
            });
        }
        softmax_row_in_place(&mut logits, 1.0);
        agents.push(AgentMotion {
            id,
            current,
            trajectories,
            scores: logits,
            parts,
        });
    }
    Ok(MotionOutput {
        frame,
        timestamp: bev.timestamp,
        agents,
    })
}
