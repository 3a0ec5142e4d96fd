use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::BevGrid;
use crate::error::{Error, Result};

/// Points closer than this along the optical axis are treated as behind the
/// camera.
pub const NEAR_PLANE: f64 = 0.05;

/// Pinhole camera with zero roll and pitch, mounted on an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    /// mounting position in the agent frame, meters
    pub mount_x: f64,
    pub mount_y: f64,
    pub mount_height: f64,
    /// optical axis heading relative to the agent heading, radians
    pub yaw_offset: f64,
    /// horizontal field of view, radians
    pub fov: f64,
    pub width: usize,
    pub height: usize,
    /// pixels
    pub focal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

impl CameraView {
    /// Focal length is derived from the horizontal FOV and image width.
    pub fn new(
        mount: [f64; 3],
        yaw_offset: f64,
        fov: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(fov > 0.0 && fov < PI) {
            return Err(Error::invalid(format!("camera fov must be in (0, pi), got {fov}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("camera image must be non-empty"));
        }
        Ok(Self {
            mount_x: mount[0],
            mount_y: mount[1],
            mount_height: mount[2],
            yaw_offset,
            fov,
            width,
            height,
            focal: (width as f64 / 2.0) / (fov / 2.0).tan(),
        })
    }

    /// Camera-frame coordinates `(forward, left, up)` of an agent-frame point.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let (dx, dy) = (p[0] - self.mount_x, p[1] - self.mount_y);
        let (s, c) = self.yaw_offset.sin_cos();
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.mount_height]
    }

    pub fn principal_point(&self) -> [f64; 2] {
        [self.width as f64 / 2.0, self.height as f64 / 2.0]
    }

    pub fn project(&self, p: [f64; 3]) -> PixelHit {
        let [fwd, left, up] = self.to_camera(p);
        if fwd < NEAR_PLANE {
            return PixelHit {
                u: f64::NAN,
                v: f64::NAN,
                visible: false,
            };
        }
        let [cx, cy] = self.principal_point();
        let u = cx - self.focal * left / fwd;
        let v = cy - self.focal * up / fwd;
        let visible = u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64;
        PixelHit { u, v, visible }
    }

    /// Unit-free ray direction `(forward, left, up)` through pixel `(u, v)`
    /// in the camera frame, with forward component 1.
    pub fn pixel_ray(&self, u: f64, v: f64) -> [f64; 3] {
        let [cx, cy] = self.principal_point();
        [1.0, (cx - u) / self.focal, (cy - v) / self.focal]
    }

    /// Rotates a camera-frame direction into the agent frame.
    pub fn camera_dir_to_agent(&self, d: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw_offset.sin_cos();
        [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub views: Vec<CameraView>,
}

impl CameraRig {
    pub fn new(views: Vec<CameraView>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::invalid("camera rig needs at least one view"));
        }
        Ok(Self { views })
    }

    /// `n` cameras at the agent center, evenly spaced in yaw starting with
    /// one looking straight ahead.
    pub fn surround(
        n: usize,
        mount_height: f64,
        fov: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let views = (0..n)
            .map(|k| {
                let yaw = super::normalize_angle(2.0 * PI * k as f64 / n as f64);
                CameraView::new([0.0, 0.0, mount_height], yaw, fov, width, height)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(views)
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Projects the vertical pillar above a BEV cell center into one view.
/// Heights are relative to the ground plane.
pub fn project_pillar(
    grid: &BevGrid,
    cell: (usize, usize),
    heights: &[f64],
    rig: &CameraRig,
    view: usize,
) -> Vec<PixelHit> {
    let cam = &rig.views[view];
    let [x, y] = grid.cell_to_local([cell.0 as f64, cell.1 as f64]);
    heights.iter().map(|&z| cam.project([x, y, z])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;

    fn cam(fov: f64) -> CameraView {
        CameraView::new([0.0, 0.0, 1.5], 0.0, fov, 96, 64).unwrap()
    }

    #[test]
    fn on_axis_point_hits_image_center() {
        let hit = cam(1.2).project([10.0, 0.0, 1.5]);
        assert!(hit.visible);
        assert_eq!([hit.u, hit.v], [48.0, 32.0]);
    }

    #[test]
    fn behind_camera_is_invisible() {
        assert!(!cam(1.2).project([-3.0, 0.0, 1.0]).visible);
    }

    #[test]
    fn half_fov_azimuth_lands_on_border() {
        let c = cam(PI / 2.0);
        let left = c.project([5.0, 5.0, 1.5]);
        let right = c.project([5.0, -5.0, 1.5]);
        assert!(left.u.abs() <= 1.0, "{}", left.u);
        assert!((right.u - 96.0).abs() <= 1.0, "{}", right.u);
    }

    #[test]
    fn pillar_column_invariance() {
        let grid = BevGrid::new(20, 20, 1.0, Pose2D::IDENTITY).unwrap();
        let rig = CameraRig::surround(6, 1.6, 1.4, 96, 64).unwrap();
        for view in 0..6 {
            for cell in [(3usize, 17usize), (10, 2), (15, 15)] {
                let hits = project_pillar(&grid, cell, &[-1.0, 0.0, 1.0, 2.0], &rig, view);
                if hits[0].u.is_finite() {
                    for h in &hits[1..] {
                        assert!((h.u - hits[0].u).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn fov_validation() {
        assert!(CameraView::new([0.0; 3], 0.0, PI, 10, 10).is_err());
        assert!(CameraView::new([0.0; 3], 0.0, 0.0, 10, 10).is_err());
    }
}
