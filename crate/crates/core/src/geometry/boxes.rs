use serde::{Deserialize, Serialize};

use super::{normalize_angle, Pose2D};

/// Planar oriented box: center, extent along the heading (`length`) and
/// across it (`width`), heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub x: f64,
    pub y: f64,
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(x: f64, y: f64, length: f64, width: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            length,
            width,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.yaw)
    }

    pub fn with_pose(&self, pose: &Pose2D) -> Self {
        Self::new(pose.x, pose.y, self.length, self.width, pose.yaw)
    }

    /// The same box expressed in the frame reached by `t`.
    pub fn transformed(&self, t: &Pose2D) -> Self {
        self.with_pose(&t.compose(&self.pose()))
    }
}
