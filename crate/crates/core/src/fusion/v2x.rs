use super::FusionBlock;
use crate::bev::BevFeature;
use crate::error::{Error, Result};
use crate::geometry::{relative_transform, warp_bev_with_mask, BevGrid, Pose2D};
use crate::tensor::DenseTensor;

/// Resamples the infrastructure map into the ego frame. Returns the aligned
/// map (on a grid centered at `ego_pose`) and the validity mask.
pub fn align_infrastructure(inf: &BevFeature, inf_pose: &Pose2D, ego_pose: &Pose2D) -> (BevFeature, Vec<f64>) {
    let t = relative_transform(inf_pose, ego_pose);
    let (mut aligned, mask) = warp_bev_with_mask(inf, &t);
    aligned.grid = inf.grid.with_origin(*ego_pose);
    (aligned, mask)
}

/// Ego cells attend to the aligned infrastructure map; the update is masked
/// and gated. Cells with a zero mask are returned bit for bit.
pub fn v2x_fuse(ego: &BevFeature, inf_aligned: &BevFeature, mask: &[f64], block: &FusionBlock) -> Result<BevFeature> {
    if ego.data.shape() != inf_aligned.data.shape() {
        return Err(Error::shape("v2x_fuse", ego.data.shape(), inf_aligned.data.shape()));
    }
    block.apply(ego, &inf_aligned.data, Some(mask))
}

const HEADER_LEN: usize = 4 + 4 + 3 * 8 + 3 * 4 + 8;

/// Intermediate-feature payload one agent broadcasts per frame.
///
/// Layout, all little-endian: agent id (u32), timestamp (u32), pose x, y,
/// yaw (f64), grid rows, columns, channels (u32), resolution (f64), then
/// `rows * cols * channels` f32 values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct V2xMessage {
    pub agent_id: u32,
    pub timestamp: u32,
    pub pose: Pose2D,
    pub h: u32,
    pub w: u32,
    pub channels: u32,
    pub resolution: f64,
    pub payload: Vec<f32>,
}

impl V2xMessage {
    /// Packs a feature map; values are rounded to f32.
    pub fn from_feature(feat: &BevFeature) -> Self {
        Self {
            agent_id: feat.agent_id,
            timestamp: feat.timestamp,
            pose: feat.grid.origin,
            h: feat.grid.h as u32,
            w: feat.grid.w as u32,
            channels: feat.channels() as u32,
            resolution: feat.grid.resolution,
            payload: feat.data.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_feature(&self) -> Result<BevFeature> {
        let grid = BevGrid::new(self.h as usize, self.w as usize, self.resolution, self.pose)?;
        let data = DenseTensor::new(
            [grid.h, grid.w, self.channels as usize],
            self.payload.iter().map(|&v| v as f64).collect(),
        )?;
        BevFeature::new(grid, data, self.agent_id, self.timestamp)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.agent_id.to_le_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        for v in [self.pose.x, self.pose.y, self.pose.yaw] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.h, self.w, self.channels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Record(format!("v2x message too short: {} bytes", bytes.len())));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (h, w, channels) = (u32_at(32), u32_at(36), u32_at(40));
        let n = h as usize * w as usize * channels as usize;
        if bytes.len() != HEADER_LEN + 4 * n {
            return Err(Error::Record(format!(
                "v2x message is {} bytes, header announces {}",
                bytes.len(),
                HEADER_LEN + 4 * n
            )));
        }
        let payload = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            agent_id: u32_at(0),
            timestamp: u32_at(4),
            // the raw yaw is kept as sent, so re-encoding reproduces the bytes
            pose: Pose2D {
                x: f64_at(8),
                y: f64_at(16),
                yaw: f64_at(24),
            },
            h,
            w,
            channels,
            resolution: f64_at(44),
            payload,
        })
    }
}
