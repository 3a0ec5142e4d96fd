use serde::{Deserialize, Serialize};

use super::Pose2D;
use crate::error::{Error, Result};

/// Metric BEV raster attached to a world pose. Row index `i` runs along the
/// local +y axis and column index `j` along local +x; the grid center sits
/// at the origin pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGrid {
    pub h: usize,
    pub w: usize,
    /// meters per cell
    pub resolution: f64,
    pub origin: Pose2D,
}

impl BevGrid {
    pub fn new(h: usize, w: usize, resolution: f64, origin: Pose2D) -> Result<Self> {
        if h < 2 || w < 2 {
            return Err(Error::invalid(format!("grid must be at least 2x2, got {h}x{w}")));
        }
        if !(resolution > 0.0) {
            return Err(Error::invalid(format!("grid resolution must be > 0, got {resolution}")));
        }
        Ok(Self {
            h,
            w,
            resolution,
            origin,
        })
    }

    pub fn with_origin(&self, origin: Pose2D) -> Self {
        Self { origin, ..*self }
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn same_geometry(&self, other: &BevGrid) -> bool {
        self.h == other.h && self.w == other.w && self.resolution == other.resolution
    }

    pub fn center_index(&self) -> [f64; 2] {
        [(self.h - 1) as f64 / 2.0, (self.w - 1) as f64 / 2.0]
    }

    /// Continuous cell coordinates to the grid's local metric frame.
    pub fn cell_to_local(&self, cell: [f64; 2]) -> [f64; 2] {
        let [ci, cj] = self.center_index();
        [(cell[1] - cj) * self.resolution, (cell[0] - ci) * self.resolution]
    }

    pub fn local_to_cell(&self, p: [f64; 2]) -> [f64; 2] {
        let [ci, cj] = self.center_index();
        [p[1] / self.resolution + ci, p[0] / self.resolution + cj]
    }

    pub fn cell_to_world(&self, cell: [f64; 2]) -> [f64; 2] {
        self.origin.transform_point(self.cell_to_local(cell))
    }

    pub fn world_to_cell(&self, p: [f64; 2]) -> [f64; 2] {
        self.local_to_cell(self.origin.inverse_transform_point(p))
    }

    /// Whether continuous cell coordinates fall inside the sampled area.
    pub fn contains_cell(&self, cell: [f64; 2]) -> bool {
        cell[0] >= 0.0
            && cell[1] >= 0.0
            && cell[0] <= (self.h - 1) as f64
            && cell[1] <= (self.w - 1) as f64
    }

    /// Half extents `(x, y)` of the area covered by cell centers, in meters.
    pub fn half_extent(&self) -> [f64; 2] {
        [
            (self.w - 1) as f64 * self.resolution / 2.0,
            (self.h - 1) as f64 * self.resolution / 2.0,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_maps_to_center() {
        let g = BevGrid::new(50, 50, 1.0, Pose2D::new(10.0, -3.0, 0.4)).unwrap();
        let c = g.world_to_cell([10.0, -3.0]);
        assert!((c[0] - 24.5).abs() < 1e-12 && (c[1] - 24.5).abs() < 1e-12);
    }

    #[test]
    fn resolution_step_moves_one_column() {
        let g = BevGrid::new(7, 9, 0.5, Pose2D::IDENTITY).unwrap();
        let c = g.world_to_cell([0.5, 0.0]);
        let center = g.center_index();
        assert!((c[0] - center[0]).abs() < 1e-12);
        assert!((c[1] - center[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(BevGrid::new(1, 5, 1.0, Pose2D::IDENTITY).is_err());
        assert!(BevGrid::new(5, 5, 0.0, Pose2D::IDENTITY).is_err());
    }

    proptest! {
        #[test]
        fn world_cell_round_trip(x in -40.0..40.0f64, y in -40.0..40.0f64,
                                 ox in -20.0..20.0f64, oy in -20.0..20.0f64, yaw in -3.0..3.0f64) {
            let g = BevGrid::new(50, 40, 0.8, Pose2D::new(ox, oy, yaw)).unwrap();
            let back = g.cell_to_world(g.world_to_cell([x, y]));
            prop_assert!((back[0] - x).abs() < 1e-9 && (back[1] - y).abs() < 1e-9);
        }
    }
}
