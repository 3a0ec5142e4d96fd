//! Planar poses, BEV grid indexing, pinhole cameras and the BEV resampling
//! used for ego-motion and infrastructure alignment.

mod boxes;
mod camera;
mod grid;
mod pose;
mod warp;

pub use boxes::OrientedBox;
pub use camera::{project_pillar, CameraRig, CameraView, PixelHit, NEAR_PLANE};
pub use grid::BevGrid;
pub use pose::{normalize_angle, relative_transform, Pose2D};
pub use warp::{warp_bev, warp_bev_to, warp_bev_with_mask};
