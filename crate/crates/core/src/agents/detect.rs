use super::TrackingConfig;
use crate::bev::{deformable_attention, BevFeature, DeformableAttnParams};
use crate::error::Result;
use crate::geometry::{OrientedBox, Pose2D};
use crate::nn::{Linear, Mlp, MultiHeadAttention};
use crate::tensor::{bilinear_sample_into, seeded_init, DenseTensor, InitScheme, RngSeed};

/// Prior box size the size head scales, meters.
const PRIOR_LENGTH: f64 = 4.5;
const PRIOR_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox,
    /// m/s, same frame as `bbox`
    pub velocity: [f64; 2],
    pub score: f64,
    pub feature: Vec<f64>,
    /// ground-truth id when the detection comes from the oracle
    pub source: Option<u32>,
}

impl Detection {
    /// Re-expresses a detection given in the frame placed at `frame` in
    /// world coordinates.
    pub fn to_world(mut self, frame: &Pose2D) -> Self {
        self.bbox = self.bbox.transformed(frame);
        self.velocity = frame.rotate(self.velocity);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub cross: DeformableAttnParams,
    pub self_attn: MultiHeadAttention,
    pub ffn: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorWeights {
    /// `N x C` learnable detection queries
    pub queries: DenseTensor,
    /// per query reference location as a fraction of the grid extent
    pub refs: Vec<[f64; 2]>,
    pub layers: Vec<DecoderLayer>,
    /// center logits (2), log size (2), heading (2), velocity (2)
    pub box_head: Linear,
    pub score_head: Linear,
}

impl DetectorWeights {
    pub fn seeded(cfg: &TrackingConfig, channels: usize, seed: RngSeed) -> Result<Self> {
        let n = cfg.det_queries;
        let side = (n as f64).sqrt().ceil() as usize;
        let refs = (0..n)
            .map(|k| {
                let (r, c) = (k / side, k % side);
                [(r as f64 + 0.5) / side as f64, (c as f64 + 0.5) / side as f64]
            })
            .collect();
        let layers = (0..cfg.decoder_layers)
            .map(|l| {
                let s = seed.derive("layer").derive_index(l as u64);
                Ok(DecoderLayer {
                    cross: DeformableAttnParams::seeded(channels, cfg.heads, 1, cfg.sample_points, s.derive("cross"))?,
                    self_attn: MultiHeadAttention::seeded(channels, cfg.heads, s.derive("self"))?,
                    ffn: Mlp::seeded(channels, 2 * channels, channels, s.derive("ffn")),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            queries: seeded_init(&[n, channels], seed.derive("queries"), InitScheme::Uniform(0.5))?,
            refs,
            layers,
            box_head: Linear::seeded_scaled(channels, 8, seed.derive("box"), 0.1),
            score_head: Linear::seeded(channels, 1, seed.derive("score")),
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn add_rows(x: &mut DenseTensor, delta: &DenseTensor) {
    for (a, b) in x.data_mut().iter_mut().zip(delta.data()) {
        *a += b;
    }
}

/// Decodes the learnable queries against the BEV map and keeps those scoring
/// at least `threshold`. Boxes are in the BEV grid's frame; centers are
/// squashed into the grid extent.
pub fn detect(bev: &BevFeature, weights: &DetectorWeights, threshold: f64) -> Result<Vec<Detection>> {
    let grid = &bev.grid;
    let (hm, wm) = ((grid.h - 1) as f64, (grid.w - 1) as f64);
    let refs: Vec<[f64; 2]> = weights.refs.iter().map(|r| [r[0] * hm, r[1] * wm]).collect();
    let mut q = weights.queries.clone();
    for layer in &weights.layers {
        let cross = deformable_attention(&q, &[&bev.data], &refs, &layer.cross)?;
        add_rows(&mut q, &cross);
        let rows: Vec<Vec<f64>> = (0..q.rows()).map(|r| q.row(r).to_vec()).collect();
        let mixed = layer.self_attn.forward(&rows, &rows);
        for (r, m) in mixed.iter().enumerate() {
            for (a, b) in q.row_mut(r).iter_mut().zip(m) {
                *a += b;
            }
            let f = layer.ffn.apply_vec(q.row(r));
            for (a, b) in q.row_mut(r).iter_mut().zip(f) {
                *a += b;
            }
        }
    }
    let mut out = Vec::new();
    for (r, rf) in weights.refs.iter().enumerate() {
        let x = q.row(r);
        let score = sigmoid(weights.score_head.apply_vec(x)[0]);
        if score < threshold {
            continue;
        }
        let z = weights.box_head.apply_vec(x);
        let ci = sigmoid(logit(rf[0]) + z[0]) * hm;
        let cj = sigmoid(logit(rf[1]) + z[1]) * wm;
        let [lx, ly] = grid.cell_to_local([ci, cj]);
        out.push(Detection {
            bbox: OrientedBox::new(
                lx,
                ly,
                PRIOR_LENGTH * z[2].clamp(-3.0, 3.0).exp(),
                PRIOR_WIDTH * z[3].clamp(-3.0, 3.0).exp(),
                z[4].atan2(1.0 + z[5]),
            ),
            velocity: [z[6], z[7]],
            score,
            feature: x.to_vec(),
            source: None,
        });
    }
    Ok(out)
}

/// Perfect detections of the given world-frame boxes that fall on the BEV
/// grid, each carrying the BEV feature at its center.
pub fn oracle_detections(bev: &BevFeature, truth: &[(u32, OrientedBox, [f64; 2])]) -> Vec<Detection> {
    let c = bev.channels();
    truth
        .iter()
        .filter_map(|&(id, bbox, velocity)| {
            let cell = bev.grid.world_to_cell(bbox.center());
            if !bev.grid.contains_cell(cell) {
                return None;
            }
            let mut feature = vec![0.0; c];
            bilinear_sample_into(bev.data.data(), bev.grid.h, bev.grid.w, cell[0], cell[1], &mut feature);
            Some(Detection {
                bbox,
                velocity,
                score: 1.0,
                feature,
                source: Some(id),
            })
        })
        .collect()
}
