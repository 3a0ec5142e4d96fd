use serde::{Deserialize, Serialize};

use super::backbone::{backbone_extract, Backbone, MultiViewImages};
use super::deformable::DeformableAttnParams;
use super::spatial::{pillar_visibility, spatial_cross_attention_with};
use super::BevFeature;
use crate::error::{Error, Result};
use crate::geometry::{BevGrid, CameraRig};
use crate::nn::Mlp;
use crate::tensor::{seeded_init, DenseTensor, InitScheme, RngSeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BevEncoderConfig {
    pub channels: usize,
    /// widths of the convolution layers before the last; the last is `channels`
    pub backbone_channels: Vec<usize>,
    pub heads: usize,
    pub sample_points: usize,
    pub layers: usize,
    pub share_layer_weights: bool,
    pub ffn_hidden: usize,
    /// meters above ground
    pub pillar_heights: Vec<f64>,
}

impl Default for BevEncoderConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            backbone_channels: vec![8, 16],
            heads: 2,
            sample_points: 4,
            layers: 6,
            share_layer_weights: false,
            ffn_hidden: 64,
            pillar_heights: vec![-1.0, 0.0, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attn: DeformableAttnParams,
    pub ffn: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevEncoderWeights {
    pub backbone: Backbone,
    /// learnable BEV query, `H*W x C`
    pub query_init: DenseTensor,
    /// one entry per round, or a single entry shared by all rounds
    pub layers: Vec<EncoderLayer>,
    pub rounds: usize,
    pub pillar_heights: Vec<f64>,
}

impl BevEncoderWeights {
    pub fn seeded(cfg: &BevEncoderConfig, grid: &BevGrid, seed: RngSeed) -> Result<Self> {
        if cfg.layers == 0 {
            return Err(Error::invalid("encoder needs at least one round"));
        }
        let mut widths = cfg.backbone_channels.clone();
        widths.push(cfg.channels);
        let distinct = if cfg.share_layer_weights { 1 } else { cfg.layers };
        let layers = (0..distinct)
            .map(|k| {
                let s = seed.derive("layer").derive_index(k as u64);
                Ok(EncoderLayer {
                    attn: DeformableAttnParams::seeded(cfg.channels, cfg.heads, 1, cfg.sample_points, s.derive("attn"))?,
                    ffn: Mlp::seeded(cfg.channels, cfg.ffn_hidden, cfg.channels, s.derive("ffn")),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            backbone: Backbone::seeded(&widths, seed.derive("backbone")),
            query_init: seeded_init(&[grid.cells(), cfg.channels], seed.derive("query"), InitScheme::Uniform(0.5))?,
            layers,
            rounds: cfg.layers,
            pillar_heights: cfg.pillar_heights.clone(),
        })
    }

    pub fn channels(&self) -> usize {
        self.query_init.shape()[1]
    }

    /// Zeroes the output projection of every attention block and the output
    /// layer of every FFN, so every round's update vanishes.
    pub fn zero_updates(&mut self) {
        for l in &mut self.layers {
            l.attn.output_proj = l.attn.output_proj.zeros_like();
            l.ffn.output = l.ffn.output.zeros_like();
        }
    }
}

/// Lifts one agent's camera images into a BEV feature map: shared backbone,
/// then `rounds` of spatial cross-attention and a per-cell FFN, each with a
/// residual connection, starting from the learnable query.
pub fn encode_bev(
    images: &MultiViewImages,
    rig: &CameraRig,
    grid: &BevGrid,
    weights: &BevEncoderWeights,
    agent_id: u32,
) -> Result<BevFeature> {
    if weights.query_init.rows() != grid.cells() {
        return Err(Error::shape("encode_bev query", weights.query_init.shape(), &[grid.cells(), 0]));
    }
    let feats = backbone_extract(images, &weights.backbone, rig.len())?;
    let size = (feats.maps[0].shape()[0], feats.maps[0].shape()[1]);
    let vis = pillar_visibility(grid, rig, &weights.pillar_heights, size, feats.stride);
    let c = weights.channels();
    let mut q = weights.query_init.clone();
    let mut ffn_out = vec![0.0; c];
    for round in 0..weights.rounds {
        let layer = &weights.layers[round % weights.layers.len()];
        q = spatial_cross_attention_with(&q, &feats, &vis, &layer.attn)?;
        for r in 0..q.rows() {
            layer.ffn.apply(q.row(r), &mut ffn_out);
            for (v, u) in q.row_mut(r).iter_mut().zip(&ffn_out) {
                *v += u;
            }
        }
    }
    let data = q.reshape([grid.h, grid.w, c])?;
    BevFeature::new(*grid, data, agent_id, images.timestamp)
}
