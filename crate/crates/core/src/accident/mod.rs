//! Collision events from footprint proximity, on ground truth and on
//! predicted motion, and matching of predicted against true events.

mod events;
mod polygon;

use serde::{Deserialize, Serialize};

pub use events::{
    detect_collisions, first_warnings, materialize, predict_accident, score, AccidentScore, AgentPath,
    CollisionEvent, EventMatch, ModePolicy,
};
pub use polygon::{footprint, intersects, min_distance, separation, FootprintPolygon, Separation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccidentConfig {
    /// footprint distance below which two agents collide, meters
    pub threshold: f64,
    pub mode_policy: ModePolicy,
    /// matching tolerances
    pub time_tol: u32,
    pub dist_tol: f64,
}

impl Default for AccidentConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            mode_policy: ModePolicy::Top1,
            time_tol: 1,
            dist_tol: 2.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use super::*;
    use crate::agents::{AgentMotion, MotionOutput};
    use crate::geometry::{OrientedBox, Pose2D};

    fn unit(x: f64, y: f64) -> OrientedBox {
        OrientedBox::new(x, y, 1.0, 1.0, 0.0)
    }

    fn sorted(mut v: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
        v.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        v
    }

    #[test]
    fn unit_square_vertices_and_area() {
        let p = footprint(&unit(0.0, 0.0)).unwrap();
        assert_eq!(
            sorted(p.vertices.to_vec()),
            vec![[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]]
        );
        let b = OrientedBox::new(1.0, 2.0, 4.2, 1.7, 0.7);
        assert!((footprint(&b).unwrap().area() - 4.2 * 1.7).abs() < 1e-12);
        assert!(footprint(&OrientedBox::new(0.0, 0.0, 0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn quarter_turn_swaps_dimensions() {
        let turned = footprint(&OrientedBox::new(0.0, 0.0, 4.0, 2.0, FRAC_PI_2)).unwrap();
        let swapped = footprint(&OrientedBox::new(0.0, 0.0, 2.0, 4.0, 0.0)).unwrap();
        for (a, b) in sorted(turned.vertices.to_vec()).iter().zip(sorted(swapped.vertices.to_vec())) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_examples() {
        let a = footprint(&unit(0.0, 0.0)).unwrap();
        assert_eq!(min_distance(&a, &footprint(&unit(0.4, 0.3)).unwrap()), 0.0);
        assert_eq!(min_distance(&a, &footprint(&unit(3.0, 0.0)).unwrap()), 2.0);
        assert_eq!(min_distance(&a, &footprint(&unit(1.0, 0.0)).unwrap()), 0.0);
    }

    #[test]
    fn head_on_approach() {
        // gap 5 m closing 1 m per frame: gaps 5, 4, 3, 2, 1, 0
        let a = AgentPath {
            id: 1,
            boxes: (0..8).map(|t| unit(-3.0 + 0.5 * t as f64, 0.0)).collect(),
        };
        let b = AgentPath {
            id: 2,
            boxes: (0..8).map(|t| unit(3.0 - 0.5 * t as f64, 0.0)).collect(),
        };
        let ev = detect_collisions(&[b.clone(), a.clone()], 0.5, 10).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].timestamp, ev[0].id_a, ev[0].id_b), (15, 1, 2));
        assert!(detect_collisions(std::slice::from_ref(&a), 0.5, 0).unwrap().is_empty());
        let apart = AgentPath {
            id: 3,
            boxes: (0..8).map(|_| unit(0.0, 5.0)).collect(),
        };
        assert!(detect_collisions(&[a, apart], 0.0, 0).unwrap().is_empty());
    }

    #[test]
    fn event_line_round_trip() {
        let e = CollisionEvent {
            timestamp: 7,
            id_a: 1,
            id_b: 4,
            position: [12.25, -3.5],
            min_distance: 0.125,
        };
        let line = e.to_string();
        assert_eq!(line, "7, 1, 4, 12.250000, -3.500000, 0.125000");
        assert_eq!(line.parse::<CollisionEvent>().unwrap(), e);
        assert!("7, 1, 4".parse::<CollisionEvent>().is_err());
    }

    fn motion(agents: Vec<(u32, OrientedBox, Vec<Vec<[f64; 2]>>)>) -> MotionOutput {
        MotionOutput {
            frame: Pose2D::IDENTITY,
            timestamp: 0,
            agents: agents
                .into_iter()
                .map(|(id, current, trajectories)| {
                    let k = trajectories.len();
                    AgentMotion {
                        id,
                        current,
                        trajectories,
                        scores: vec![1.0 / k as f64; k],
                        parts: Vec::new(),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn static_agents_apart_never_collide() {
        let m = motion(vec![
            (0, unit(0.0, 0.0), vec![vec![[0.0, 0.0]; 4]]),
            (1, unit(3.0, 0.0), vec![vec![[3.0, 0.0]; 4]]),
        ]);
        assert!(predict_accident(&m, 0.5, ModePolicy::Top1).unwrap().is_empty());
    }

    #[test]
    fn ego_driving_at_static_agent() {
        // ego 4.5 x 2 at origin, 2 m per step; agent 4 m ahead
        let ego = OrientedBox::new(0.0, 0.0, 4.5, 2.0, 0.0);
        let path: Vec<[f64; 2]> = (1..=4).map(|t| [2.0 * t as f64, 0.0]).collect();
        let other = OrientedBox::new(8.5, 0.0, 4.5, 2.0, 0.0);
        let m = motion(vec![(9, ego, vec![path.clone()]), (2, other, vec![vec![[8.5, 0.0]; 4]])]);
        let ev = predict_accident(&m, 0.5, ModePolicy::Top1).unwrap();
        // gaps 4, 2, 0: the first below 0.5 m is step 2
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].timestamp, ev[0].id_a, ev[0].id_b), (2, 2, 9));
        let tripled = motion(vec![
            (9, ego, vec![path.clone(), path.clone(), path]),
            (2, other, vec![vec![[8.5, 0.0]; 4]; 3]),
        ]);
        for policy in [ModePolicy::Top1, ModePolicy::AnyMode] {
            assert_eq!(predict_accident(&tripled, 0.5, policy).unwrap(), ev);
        }
    }

    fn ev(t: u32, a: u32, b: u32, x: f64) -> CollisionEvent {
        CollisionEvent {
            timestamp: t,
            id_a: a,
            id_b: b,
            position: [x, 0.0],
            min_distance: 0.0,
        }
    }

    #[test]
    fn scoring_examples() {
        let gt = vec![ev(5, 1, 2, 0.0), ev(8, 2, 3, 4.0)];
        let s = score(&gt, &gt, 1, 2.0);
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (2, 0, 0));
        let s = score(&[], &gt, 1, 2.0);
        assert_eq!(s.false_negatives, 2);
        let shifted = vec![ev(7, 1, 2, 0.0), ev(8, 2, 3, 4.0)];
        let s = score(&shifted, &gt, 1, 2.0);
        assert_eq!((s.true_positives, s.false_positives, s.false_negatives), (1, 1, 1));
    }
}
