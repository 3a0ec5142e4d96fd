//! Temporal fusion with the motion-compensated previous frame and
//! vehicle/infrastructure fusion of aligned BEV maps.

mod block;
mod temporal;
mod v2x;

use serde::{Deserialize, Serialize};

pub use block::{FusionBlock, FusionGrads};
pub use temporal::{temporal_fuse, TemporalState};
pub use v2x::{align_infrastructure, v2x_fuse, V2xMessage};

use crate::error::Result;
use crate::tensor::RngSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub heads: usize,
    pub sample_points: usize,
    pub temporal: bool,
    /// fuse the infrastructure map before the temporal step instead of after
    pub v2x_first: bool,
    /// replace both learned gates by a constant 1
    pub force_gate_open: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            heads: 2,
            sample_points: 4,
            temporal: true,
            v2x_first: false,
            force_gate_open: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub temporal: FusionBlock,
    pub v2x: FusionBlock,
}

impl FusionWeights {
    pub fn seeded(cfg: &FusionConfig, channels: usize, seed: RngSeed) -> Result<Self> {
        let mut temporal = FusionBlock::seeded(channels, cfg.heads, cfg.sample_points, seed.derive("temporal"))?;
        let mut v2x = FusionBlock::seeded(channels, cfg.heads, cfg.sample_points, seed.derive("v2x"))?;
        temporal.gate_open = cfg.force_gate_open;
        v2x.gate_open = cfg.force_gate_open;
        Ok(Self { temporal, v2x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::{BevFeature, DeformableAttnParams};
    use crate::geometry::{BevGrid, Pose2D};
    use crate::nn::Linear;
    use crate::tensor::{seeded_init, DenseTensor, InitScheme};

    fn grid(origin: Pose2D) -> BevGrid {
        BevGrid::new(8, 10, 1.0, origin).unwrap()
    }

    fn random_feature(origin: Pose2D, c: usize, seed: u64) -> BevFeature {
        let data = seeded_init(&[8, 10, c], RngSeed(seed), InitScheme::Uniform(1.0)).unwrap();
        BevFeature::new(grid(origin), data, 0, 0).unwrap()
    }

    fn degenerate_block(c: usize, open: bool) -> FusionBlock {
        FusionBlock {
            attn: DeformableAttnParams::degenerate(c),
            gate: Linear::zeros(c, c),
            gate_open: open,
        }
    }

    #[test]
    fn first_frame_is_identity() {
        let cur = random_feature(Pose2D::IDENTITY, 4, 1);
        let block = FusionBlock::seeded(4, 2, 4, RngSeed(2)).unwrap();
        assert_eq!(temporal_fuse(&cur, &TemporalState::new(), &block).unwrap(), cur);
    }

    #[test]
    fn stationary_repeat_doubles_with_open_gate() {
        let cur = random_feature(Pose2D::new(3.0, -1.0, 0.4), 4, 1);
        let mut state = TemporalState::new();
        state.push(&cur);
        let doubled = temporal_fuse(&cur, &state, &degenerate_block(4, true)).unwrap();
        assert_eq!(doubled.data, cur.data.scaled(2.0));
        let closed = temporal_fuse(&cur, &state, &degenerate_block(4, false)).unwrap();
        assert_eq!(closed, cur);
    }

    #[test]
    fn one_cell_ego_motion_moves_update_one_column_back() {
        let mut prev = BevFeature::zeros(grid(Pose2D::IDENTITY), 3, 0, 0);
        prev.data.set(&[4, 6, 1], 1.0);
        let mut state = TemporalState::new();
        state.push(&prev);
        let cur = BevFeature::zeros(grid(Pose2D::new(1.0, 0.0, 0.0)), 3, 0, 1);
        let out = temporal_fuse(&cur, &state, &degenerate_block(3, true)).unwrap();
        let norms = out.cell_norms();
        let argmax = (0..norms.len()).max_by(|&a, &b| norms[a].total_cmp(&norms[b])).unwrap();
        assert_eq!((argmax / 10, argmax % 10), (4, 5));
        assert_eq!(norms.iter().filter(|&&n| n > 0.0).count(), 1);
    }

    #[test]
    fn align_same_pose_is_identity_with_full_mask() {
        let p = Pose2D::new(5.0, 2.0, 1.0);
        let inf = random_feature(p, 4, 3);
        let (aligned, mask) = align_infrastructure(&inf, &p, &p);
        assert_eq!(aligned.data, inf.data);
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn align_disjoint_is_empty() {
        let p = Pose2D::new(100.0, 0.0, 0.0);
        let inf = random_feature(p, 4, 3);
        let (aligned, mask) = align_infrastructure(&inf, &p, &Pose2D::IDENTITY);
        assert!(aligned.data.data().iter().all(|&v| v == 0.0));
        assert!(mask.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn zero_mask_returns_ego_bitwise() {
        let ego = random_feature(Pose2D::IDENTITY, 4, 5);
        let inf = random_feature(Pose2D::IDENTITY, 4, 6);
        let mut block = FusionBlock::seeded(4, 2, 4, RngSeed(7)).unwrap();
        block.gate_open = true;
        let out = v2x_fuse(&ego, &inf, &vec![0.0; 80], &block).unwrap();
        assert_eq!(out, ego);
    }

    #[test]
    fn zero_gate_returns_ego() {
        let ego = random_feature(Pose2D::IDENTITY, 4, 5);
        let inf = random_feature(Pose2D::IDENTITY, 4, 6);
        let block = FusionBlock::seeded(4, 2, 4, RngSeed(7)).unwrap();
        let out = v2x_fuse(&ego, &inf, &vec![1.0; 80], &block).unwrap();
        assert_eq!(out, ego);
    }

    #[test]
    fn single_infrastructure_cell_reaches_its_bilinear_footprint() {
        let ego = BevFeature::zeros(grid(Pose2D::IDENTITY), 2, 0, 0);
        let mut inf = BevFeature::zeros(grid(Pose2D::IDENTITY), 2, 1, 0);
        inf.data.set(&[3, 4, 0], 1.0);
        let mut block = degenerate_block(2, true);
        block.attn.offset_net.bias = DenseTensor::vector(vec![0.5, 0.25]);
        let out = v2x_fuse(&ego, &inf, &vec![1.0; 80], &block).unwrap();
        let mut support: Vec<(usize, usize)> = (0..80)
            .filter(|&k| out.cell(k / 10, k % 10).iter().any(|&v| v != 0.0))
            .map(|k| (k / 10, k % 10))
            .collect();
        support.sort();
        assert_eq!(support, vec![(2, 3), (2, 4), (3, 3), (3, 4)]);
    }

    #[test]
    fn message_round_trip_is_bit_exact() {
        let mut feat = random_feature(Pose2D::new(12.5, -3.0, 2.0), 3, 9);
        feat.agent_id = 7;
        feat.timestamp = 4;
        let msg = V2xMessage::from_feature(&feat);
        let bytes = msg.encode();
        assert_eq!(bytes.len(), msg.encoded_len());
        let back = V2xMessage::decode(&bytes).unwrap();
        assert_eq!(back, msg);
        assert_eq!(back.encode(), bytes);
        let restored = back.to_feature().unwrap();
        assert_eq!(restored.grid, feat.grid);
        for (a, b) in restored.data.data().iter().zip(feat.data.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(V2xMessage::decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
