//! Query-based detection and tracking over the cooperative BEV map, and the
//! multi-modal motion head.

mod assign;
mod detect;
mod motion;
mod track;

use serde::{Deserialize, Serialize};

pub use assign::{gated_assignment, hungarian};
pub use detect::{detect, oracle_detections, DecoderLayer, Detection, DetectorWeights};
pub use motion::{
    position_encoding, predict_motion, AgentMotion, AnchorSet, MotionOutput, MotionQueryParts, MotionWeights,
};
pub use track::{
    associate, step_perception, EgoQuery, PerceptionState, TrackQuery, TrackSet, TrackingWeights, EGO_TRACK_ID,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// feed ground-truth boxes as detections instead of running the detector
    pub oracle_detections: bool,
    pub det_queries: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub sample_points: usize,
    pub score_threshold: f64,
    /// association radius around the predicted track position, meters
    pub gate: f64,
    pub max_coast: u32,
    /// seconds between frames
    pub dt: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            oracle_detections: true,
            det_queries: 16,
            decoder_layers: 3,
            heads: 2,
            sample_points: 4,
            score_threshold: 0.5,
            gate: 2.0,
            max_coast: 2,
            dt: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub modes: usize,
    pub horizon: usize,
    /// seconds per predicted step
    pub dt: f64,
    /// one anchor template per entry, 1/m; the first is the straight one
    pub anchor_curvatures: Vec<f64>,
    pub heads: usize,
    pub sample_points: usize,
    pub ffn_hidden: usize,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            modes: 3,
            horizon: 6,
            dt: 0.5,
            anchor_curvatures: vec![0.0, 0.1, -0.1],
            heads: 2,
            sample_points: 4,
            ffn_hidden: 64,
        }
    }
}

impl MotionConfig {
    pub fn anchors(&self) -> AnchorSet {
        AnchorSet::new(self.anchor_curvatures.clone(), self.horizon, self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::BevFeature;
    use crate::geometry::{BevGrid, OrientedBox, Pose2D};
    use crate::tensor::{seeded_init, InitScheme, RngSeed};

    const C: usize = 8;

    fn bev(seed: u64) -> BevFeature {
        let grid = BevGrid::new(12, 12, 1.0, Pose2D::new(2.0, 1.0, 0.3)).unwrap();
        let data = seeded_init(&[12, 12, C], RngSeed(seed), InitScheme::Uniform(1.0)).unwrap();
        BevFeature::new(grid, data, 0, 3).unwrap()
    }

    fn det(x: f64, y: f64) -> Detection {
        Detection {
            bbox: OrientedBox::new(x, y, 4.0, 2.0, 0.0),
            velocity: [0.0, 0.0],
            score: 1.0,
            feature: vec![0.0; C],
            source: None,
        }
    }

    fn cfg() -> TrackingConfig {
        TrackingConfig {
            det_queries: 6,
            ..TrackingConfig::default()
        }
    }

    #[test]
    fn detector_boxes_stay_on_grid_and_are_deterministic() {
        let b = bev(1);
        let w = DetectorWeights::seeded(&cfg(), C, RngSeed(4)).unwrap();
        let all = detect(&b, &w, 0.0).unwrap();
        assert_eq!(all.len(), 6);
        for d in &all {
            assert!(b.grid.contains_cell(b.grid.local_to_cell(d.bbox.center())));
            assert!(d.bbox.length > 0.0 && d.bbox.width > 0.0);
        }
        assert_eq!(all, detect(&b, &w, 0.0).unwrap());
        assert!(detect(&b, &w, 1.0 + 1e-9).unwrap().is_empty());
    }

    #[test]
    fn spawn_ids_in_detection_order() {
        let mut next = 0;
        let tracks = associate(&[], &[det(0.0, 0.0), det(5.0, 0.0), det(9.0, 9.0)], &cfg(), None, &mut next);
        assert_eq!(tracks.iter().map(|t| t.id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(next, 3);
    }

    #[test]
    fn nearby_detection_keeps_id() {
        let mut next = 0;
        let tracks = associate(&[], &[det(0.0, 0.0)], &cfg(), None, &mut next);
        let tracks = associate(&tracks, &[det(0.5, 0.0)], &cfg(), None, &mut next);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].id, 0);
        assert_eq!(tracks[0].bbox.x, 0.5);
    }

    #[test]
    fn far_swapped_detections_spawn_and_tracks_coast() {
        let mut next = 0;
        let tracks = associate(&[], &[det(0.0, 0.0), det(10.0, 0.0)], &cfg(), None, &mut next);
        let tracks = associate(&tracks, &[det(10.0, 5.0), det(0.0, 5.0)], &cfg(), None, &mut next);
        let ids: Vec<(u32, u32)> = tracks.iter().map(|t| (t.id, t.coast)).collect();
        assert_eq!(ids, vec![(0, 1), (1, 1), (2, 0), (3, 0)]);
        // coasting beyond the limit retires a track for good
        let mut tracks = tracks;
        tracks = associate(&tracks, &[], &cfg(), None, &mut next);
        assert_eq!(tracks.iter().map(|t| t.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        tracks = associate(&tracks, &[], &cfg(), None, &mut next);
        assert_eq!(tracks.iter().map(|t| t.id).collect::<Vec<_>>(), vec![2, 3]);
        tracks = associate(&tracks, &[], &cfg(), None, &mut next);
        assert!(tracks.is_empty());
        let tracks = associate(&tracks, &[det(0.0, 0.0)], &cfg(), None, &mut next);
        assert_eq!(tracks[0].id, 4);
    }

    #[test]
    fn perception_without_detections_keeps_ego() {
        let b = bev(2);
        let tc = TrackingConfig {
            oracle_detections: false,
            ..cfg()
        };
        let w = TrackingWeights::seeded(&tc, C, RngSeed(5)).unwrap();
        let mut state = PerceptionState::new(&w, b.grid.origin, [4.5, 2.0]);
        let set = step_perception(&b, &mut state, &w, &tc, Some(Vec::new())).unwrap();
        assert!(set.tracks.is_empty());
        assert_eq!(set.ego.pose, b.grid.origin);
        assert_eq!(set.ego.feature.len(), C);
    }

    fn motion_setup(modes: usize, horizon: usize) -> (TrackSet, BevFeature, MotionConfig, MotionWeights) {
        let b = bev(3);
        let mc = MotionConfig {
            modes,
            horizon,
            anchor_curvatures: (0..modes).map(|k| 0.05 * k as f64).collect(),
            ..MotionConfig::default()
        };
        let w = MotionWeights::seeded(&mc, C, RngSeed(6)).unwrap();
        let tw = TrackingWeights::seeded(&cfg(), C, RngSeed(5)).unwrap();
        let mut state = PerceptionState::new(&tw, b.grid.origin, [4.5, 2.0]);
        let dets: Vec<Detection> = (0..3)
            .map(|k| Detection {
                velocity: [1.0 + k as f64, 0.5],
                feature: vec![0.1 * k as f64; C],
                ..det(k as f64 * 3.0, 1.0 - k as f64)
            })
            .collect();
        state.ego.velocity = [2.0, 0.0];
        let set = step_perception(&b, &mut state, &tw, &cfg(), Some(dets)).unwrap();
        (set, b, mc, w)
    }

    #[test]
    fn motion_output_shape() {
        let (set, b, mc, w) = motion_setup(6, 12);
        let out = predict_motion(&set, &b, &mc.anchors(), &w, 6).unwrap();
        assert_eq!(out.agents.len(), 4);
        assert_eq!(out.agents[3].id, EGO_TRACK_ID);
        for a in &out.agents {
            assert_eq!(a.trajectories.len(), 6);
            assert!(a.trajectories.iter().all(|t| t.len() == 12));
            assert_eq!(a.scores.len(), 6);
            assert!((a.scores.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert!(predict_motion(&set, &b, &mc.anchors(), &w, 7).is_err());
    }

    #[test]
    fn zero_decoders_reproduce_agent_anchors() {
        let (set, b, mc, w) = motion_setup(3, 6);
        let anchors = mc.anchors();
        let out = predict_motion(&set, &b, &anchors, &w, 3).unwrap();
        for a in &out.agents {
            let v = if a.id == EGO_TRACK_ID {
                set.ego.velocity
            } else {
                set.tracks.iter().find(|t| t.id == a.id).unwrap().velocity
            };
            for k in 0..3 {
                let expect = anchors.agent_anchor(k, v[0].hypot(v[1]), &a.current.pose());
                assert_eq!(a.trajectories[k], expect);
                assert_eq!(a.parts[k].endpoint_encoding, a.parts[k].agent_anchor_encoding);
            }
            assert!(a.scores.iter().all(|&s| (s - 1.0 / 3.0).abs() < 1e-12));
            assert_eq!(a.top_mode(), 0);
        }
    }
}
