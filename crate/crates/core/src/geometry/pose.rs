use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = PI - (PI - a).rem_euclid(2.0 * PI);
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Planar rigid transform: rotation by `yaw`, then translation by `(x, y)`.
/// As a pose it is the placement of a body frame in its parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Default for Pose2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose2D {
    pub const IDENTITY: Pose2D = Pose2D {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
    };

    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let [x, y] = self.transform_point([other.x, other.y]);
        Pose2D::new(x, y, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.yaw.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)
    }

    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [c * p[0] - s * p[1] + self.x, s * p[0] + c * p[1] + self.y]
    }

    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p[0] - self.x, p[1] - self.y);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Rotates a free vector (no translation).
    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Largest componentwise difference, with yaw compared on the circle.
    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max(normalize_angle(self.yaw - other.yaw).abs())
    }
}

/// Transform that maps coordinates expressed in the `from` body frame into
/// the `to` body frame (both poses given in world coordinates).
pub fn relative_transform(from: &Pose2D, to: &Pose2D) -> Pose2D {
    to.inverse().compose(from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn compose_examples() {
        let p = Pose2D::new(1.5, -2.0, 0.7);
        assert_eq!(Pose2D::IDENTITY.compose(&p), p);
        let t = Pose2D::new(1.0, 0.0, 0.0);
        assert_eq!(t.compose(&t), Pose2D::new(2.0, 0.0, 0.0));
        assert!(p.compose(&p.inverse()).distance_to(&Pose2D::IDENTITY) < 1e-12);
    }

    #[test]
    fn relative_transform_examples() {
        let p = Pose2D::new(3.0, 4.0, -1.0);
        assert!(relative_transform(&p, &p).distance_to(&Pose2D::IDENTITY) < 1e-15);
        let t = relative_transform(&Pose2D::IDENTITY, &Pose2D::new(1.0, 0.0, 0.0));
        assert!(t.distance_to(&Pose2D::new(-1.0, 0.0, 0.0)) < 1e-15);
    }

    fn pose() -> impl Strategy<Value = Pose2D> {
        (-50.0..50.0f64, -50.0..50.0f64, -4.0..4.0f64).prop_map(|(x, y, a)| Pose2D::new(x, y, a))
    }

    proptest! {
        #[test]
        fn group_laws(a in pose(), b in pose(), c in pose()) {
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!(lhs.distance_to(&rhs) < 1e-12);
            prop_assert!(a.inverse().compose(&a).distance_to(&Pose2D::IDENTITY) < 1e-12);
            prop_assert!(a.compose(&Pose2D::IDENTITY).distance_to(&a) < 1e-15);
            prop_assert!(a.yaw > -PI && a.yaw <= PI);
        }

        #[test]
        fn relative_transform_maps_frames(from in pose(), to in pose(), px in -30.0..30.0f64, py in -30.0..30.0f64) {
            let t = relative_transform(&from, &to);
            let world = from.transform_point([px, py]);
            let expect = to.inverse_transform_point(world);
            let got = t.transform_point([px, py]);
            prop_assert!((got[0] - expect[0]).abs() < 1e-9 && (got[1] - expect[1]).abs() < 1e-9);
            let back = t.inverse().transform_point(got);
            prop_assert!((back[0] - px).abs() < 1e-9 && (back[1] - py).abs() < 1e-9);
        }
    }
}
