use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::polygon::{footprint, separation, FootprintPolygon, Separation};
use crate::agents::{AgentMotion, MotionOutput};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub timestamp: u32,
    /// `id_a < id_b`
    pub id_a: u32,
    pub id_b: u32,
    /// midpoint of the closest points, meters
    pub position: [f64; 2],
    pub min_distance: f64,
}

impl CollisionEvent {
    pub fn pair(&self) -> (u32, u32) {
        (self.id_a, self.id_b)
    }

    /// The same event with its position re-expressed through `t`.
    pub fn transformed(&self, t: &Pose2D) -> Self {
        Self {
            position: t.transform_point(self.position),
            ..*self
        }
    }
}

/// `t, id_a, id_b, x, y, min_distance` with six fractional digits.
impl fmt::Display for CollisionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {}, {:.6}, {:.6}, {:.6}",
            self.timestamp, self.id_a, self.id_b, self.position[0], self.position[1], self.min_distance
        )
    }
}

impl FromStr for CollisionEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Record(format!("bad event line `{s}`"));
        let f: Vec<&str> = s.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let int = |i: usize| f[i].parse::<u32>().map_err(|_| bad());
        let real = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            timestamp: int(0)?,
            id_a: int(1)?,
            id_b: int(2)?,
            position: [real(3)?, real(4)?],
            min_distance: real(5)?,
        })
    }
}

/// Boxes of one agent at consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPath {
    pub id: u32,
    pub boxes: Vec<OrientedBox>,
}

fn footprints(paths: &[AgentPath]) -> Result<Vec<Vec<FootprintPolygon>>> {
    paths
        .iter()
        .map(|p| p.boxes.iter().map(footprint).collect())
        .collect()
}

fn check_paths(paths: &[AgentPath], threshold: f64) -> Result<usize> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("safety threshold must be >= 0, got {threshold}")));
    }
    let frames = paths.first().map_or(0, |p| p.boxes.len());
    if paths.iter().any(|p| p.boxes.len() != frames) {
        return Err(Error::invalid("agent paths must cover the same frames"));
    }
    let mut ids: Vec<u32> = paths.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate agent id"));
    }
    Ok(frames)
}

fn make_event(t: u32, a: u32, b: u32, sep: &Separation) -> CollisionEvent {
    CollisionEvent {
        timestamp: t,
        id_a: a.min(b),
        id_b: a.max(b),
        position: sep.midpoint(),
        min_distance: sep.distance,
    }
}

/// First frame at which two footprint sequences come closer than
/// `threshold`, with the separation there.
fn first_contact(a: &[FootprintPolygon], b: &[FootprintPolygon], threshold: f64) -> Option<(usize, Separation)> {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(t, (pa, pb))| (t, separation(pa, pb)))
        .find(|(_, s)| s.distance < threshold)
}

/// Frame-by-frame proximity check. At every frame each agent's neighbors are
/// examined nearest first; a pair is reported once, at the first frame its
/// footprint distance drops below `threshold`. Frame `k` of the paths gets
/// timestamp `t0 + k`. Events are ordered by `(timestamp, id_a, id_b)`.
pub fn detect_collisions(paths: &[AgentPath], threshold: f64, t0: u32) -> Result<Vec<CollisionEvent>> {
    let frames = check_paths(paths, threshold)?;
    let polys = footprints(paths)?;
    let n = paths.len();
    let mut reported = vec![false; n * n];
    let mut events = Vec::new();
    for t in 0..frames {
        for i in 0..n {
            let mut near: Vec<(f64, usize, Separation)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s = separation(&polys[i][t], &polys[j][t]);
                    (s.distance, j, s)
                })
                .collect();
            near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            for (d, j, s) in near {
                if d >= threshold {
                    break;
                }
                let key = i.min(j) * n + i.max(j);
                if !reported[key] {
                    reported[key] = true;
                    events.push(make_event(t0 + t as u32, paths[i].id, paths[j].id, &s));
                }
            }
        }
    }
    events.sort_by_key(|e| (e.timestamp, e.id_a, e.id_b));
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModePolicy {
    /// each agent follows its highest-scoring mode
    Top1,
    /// a pair collides if any combination of their modes does
    AnyMode,
}

/// Boxes along one predicted mode: the current box, then one per step.
/// Heading follows the displacement between consecutive steps; the first
/// step keeps the current heading, as does any step that does not move.
pub fn materialize(agent: &AgentMotion, mode: usize) -> Vec<OrientedBox> {
    let cur = agent.current;
    let mut out = vec![cur];
    let mut prev = cur.center();
    let mut yaw = cur.yaw;
    for (t, p) in agent.trajectories[mode].iter().enumerate() {
        let (dx, dy) = (p[0] - prev[0], p[1] - prev[1]);
        if t > 0 && dx.hypot(dy) > 1e-9 {
            yaw = dy.atan2(dx);
        }
        out.push(OrientedBox::new(p[0], p[1], cur.length, cur.width, yaw));
        prev = *p;
    }
    out
}

/// Collision events implied by predicted motion, in the prediction frame.
/// The current boxes are frame `motion.timestamp`, step `k` is
/// `motion.timestamp + k`.
pub fn predict_accident(motion: &MotionOutput, threshold: f64, policy: ModePolicy) -> Result<Vec<CollisionEvent>> {
    let t0 = motion.timestamp;
    match policy {
        ModePolicy::Top1 => {
            let paths: Vec<AgentPath> = motion
                .agents
                .iter()
                .map(|a| AgentPath {
                    id: a.id,
                    boxes: materialize(a, a.top_mode()),
                })
                .collect();
            detect_collisions(&paths, threshold, t0)
        }
        ModePolicy::AnyMode => {
            let per_mode: Vec<Vec<AgentPath>> = motion
                .agents
                .iter()
                .map(|a| {
                    (0..a.trajectories.len())
                        .map(|k| AgentPath {
                            id: a.id,
                            boxes: materialize(a, k),
                        })
                        .collect()
                })
                .collect();
            // one path per agent is enough to validate ids, lengths and threshold
            let firsts: Vec<AgentPath> = per_mode.iter().filter_map(|p| p.first().cloned()).collect();
            let frames = check_paths(&firsts, threshold)?;
            if per_mode.iter().flatten().any(|p| p.boxes.len() != frames) {
                return Err(Error::invalid("agent paths must cover the same frames"));
            }
            let polys: Vec<Vec<Vec<FootprintPolygon>>> =
                per_mode.iter().map(|p| footprints(p)).collect::<Result<_>>()?;
            let mut events = Vec::new();
            for i in 0..polys.len() {
                for j in i + 1..polys.len() {
                    // earliest contact over all mode pairs; first pair wins ties
                    let mut best: Option<(usize, Separation)> = None;
                    for pa in &polys[i] {
                        for pb in &polys[j] {
                            if let Some(c) = first_contact(pa, pb, threshold) {
                                if best.as_ref().is_none_or(|b| c.0 < b.0) {
                                    best = Some(c);
                                }
                            }
                        }
                    }
                    if let Some((t, s)) = best {
                        events.push(make_event(t0 + t as u32, motion.agents[i].id, motion.agents[j].id, &s));
                    }
                }
            }
            events.sort_by_key(|e| (e.timestamp, e.id_a, e.id_b));
            Ok(events)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventMatch {
    pub pred: usize,
    pub gt: usize,
    pub time_error: u32,
    pub position_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccidentScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub matches: Vec<EventMatch>,
}

impl AccidentScore {
    pub fn precision(&self) -> Option<f64> {
        let d = self.true_positives + self.false_positives;
        (d > 0).then(|| self.true_positives as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.true_positives + self.false_negatives;
        (d > 0).then(|| self.true_positives as f64 / d as f64)
    }
}

/// One-to-one matching of predicted to ground-truth events: same unordered
/// pair, timestamps within `time_tol`, positions within `dist_tol`. Candidate
/// pairs are taken greedily by increasing time error (then position error).
pub fn score(pred: &[CollisionEvent], gt: &[CollisionEvent], time_tol: u32, dist_tol: f64) -> AccidentScore {
    let mut cands = Vec::new();
    for (p, pe) in pred.iter().enumerate() {
        for (g, ge) in gt.iter().enumerate() {
            if pe.pair() != ge.pair() {
                continue;
            }
            let time_error = pe.timestamp.abs_diff(ge.timestamp);
            let position_error = (pe.position[0] - ge.position[0]).hypot(pe.position[1] - ge.position[1]);
            if time_error <= time_tol && position_error <= dist_tol {
                cands.push(EventMatch {
                    pred: p,
                    gt: g,
                    time_error,
                    position_error,
                });
            }
        }
    }
    cands.sort_by(|a, b| {
        a.time_error
            .cmp(&b.time_error)
            .then(a.position_error.total_cmp(&b.position_error))
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut matches = Vec::new();
    for m in cands {
        if !pred_used[m.pred] && !gt_used[m.gt] {
            pred_used[m.pred] = true;
            gt_used[m.gt] = true;
            matches.push(m);
        }
    }
    AccidentScore {
        true_positives: matches.len(),
        false_positives: pred.len() - matches.len(),
        false_negatives: gt.len() - matches.len(),
        matches,
    }
}

/// Collapses per-frame predictions into one event per pair, keeping the
/// one issued earliest (the first warning).
pub fn first_warnings(per_frame: &[Vec<CollisionEvent>]) -> Vec<CollisionEvent> {
    let mut first: BTreeMap<(u32, u32), CollisionEvent> = BTreeMap::new();
    for events in per_frame {
        for e in events {
            first.entry(e.pair()).or_insert(*e);
        }
    }
    let mut out: Vec<CollisionEvent> = first.into_values().collect();
    out.sort_by_key(|e| (e.timestamp, e.id_a, e.id_b));
    out
}
