use super::FusionBlock;
use crate::bev::BevFeature;
use crate::error::{Error, Result};
use crate::geometry::{relative_transform, warp_bev, Pose2D};

/// History carried between frames by one pipeline instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemporalState {
    pub prev: Option<BevFeature>,
    pub prev_pose: Pose2D,
}

impl TemporalState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores the fused map of the frame just processed as the next
    /// frame's history.
    pub fn push(&mut self, fused: &BevFeature) {
        self.prev_pose = fused.grid.origin;
        self.prev = Some(fused.clone());
    }
}

/// Motion-compensates the previous map into the current frame and lets every
/// current cell attend to it around its own location. Without history the
/// current map is returned unchanged.
pub fn temporal_fuse(current: &BevFeature, state: &TemporalState, block: &FusionBlock) -> Result<BevFeature> {
    let Some(prev) = &state.prev else {
        return Ok(current.clone());
    };
    if !prev.grid.same_geometry(&current.grid) || prev.channels() != current.channels() {
        return Err(Error::GridMismatch(format!(
            "history {}x{}x{} vs current {}x{}x{}",
            prev.grid.h,
            prev.grid.w,
            prev.channels(),
            current.grid.h,
            current.grid.w,
            current.channels()
        )));
    }
    let t = relative_transform(&state.prev_pose, &current.grid.origin);
    let aligned = warp_bev(prev, &t);
    block.apply(current, &aligned.data, None)
}
