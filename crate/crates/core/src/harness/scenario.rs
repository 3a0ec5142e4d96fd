use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Config;
use crate::accident::{detect_collisions, AgentPath, CollisionEvent};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, CameraRig, OrientedBox, Pose2D};

/// Id of the ego vehicle in scenarios, ground truth and records.
pub const EGO_ID: u32 = 0;
/// Agent id carried by infrastructure BEV features and messages.
pub const INFRA_ID: u32 = 9999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// two agents on perpendicular paths meet at a conflict point
    Crossing,
    /// the ego follows a lead vehicle; nobody collides
    Following,
    /// an agent changes lanes into its neighbor
    Merging,
    /// parallel and oncoming traffic, no conflict
    Benign,
    /// an agent crosses the ego's path and hits it
    EgoCrossing,
    /// a truck hides a car from the ego; infrastructure sees both
    Occluded,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Crossing,
        Template::Following,
        Template::Merging,
        Template::Benign,
        Template::EgoCrossing,
        Template::Occluded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Crossing => "crossing",
            Template::Following => "following",
            Template::Merging => "merging",
            Template::Benign => "benign",
            Template::EgoCrossing => "ego_crossing",
            Template::Occluded => "occluded",
        }
    }

    /// Number of ground-truth collision events the template guarantees.
    pub fn expected_collisions(self) -> usize {
        match self {
            Template::Crossing | Template::Merging | Template::EgoCrossing => 1,
            Template::Following | Template::Benign | Template::Occluded => 0,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Template::ALL.iter().map(|t| t.name()).collect();
                Error::Config(format!("unknown template `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// From `start_frame` on, the agent drives at `speed` m/s while turning at
/// `yaw_rate` rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: usize,
    pub speed: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAgent {
    pub id: u32,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// pose at frame 0
    pub start: Pose2D,
    /// sorted by `start_frame`, the first one starting at frame 0
    pub segments: Vec<Segment>,
}

impl ScriptedAgent {
    pub fn constant(id: u32, dims: [f64; 3], start: Pose2D, speed: f64) -> Self {
        Self {
            id,
            length: dims[0],
            width: dims[1],
            height: dims[2],
            start,
            segments: vec![Segment {
                start_frame: 0,
                speed,
                yaw_rate: 0.0,
            }],
        }
    }

    fn segment_at(&self, frame: usize) -> &Segment {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start_frame <= frame)
            .unwrap_or(&self.segments[0])
    }

    /// Adds a segment, replacing any that start at or after `start_frame`.
    pub fn switch_at(&mut self, start_frame: usize, speed: f64, yaw_rate: f64) {
        self.segments.retain(|s| s.start_frame < start_frame);
        self.segments.push(Segment {
            start_frame,
            speed,
            yaw_rate,
        });
    }

    /// Poses at frames `0..frames`, integrating each frame interval exactly
    /// along a circular arc.
    pub fn poses(&self, frames: usize, dt: f64) -> Vec<Pose2D> {
        let mut out = Vec::with_capacity(frames);
        let mut p = self.start;
        for k in 0..frames {
            out.push(p);
            let s = self.segment_at(k);
            let dist = s.speed * dt;
            let dyaw = s.yaw_rate * dt;
            let (dx, dy) = if dyaw.abs() < 1e-12 {
                (dist, 0.0)
            } else {
                let r = dist / dyaw;
                (r * dyaw.sin(), r * (1.0 - dyaw.cos()))
            };
            let [x, y] = p.transform_point([dx, dy]);
            p = Pose2D::new(x, y, p.yaw + dyaw);
        }
        out
    }

    /// World-frame velocity at each frame, from the segment active over the
    /// following interval.
    pub fn velocities(&self, frames: usize, dt: f64) -> Vec<[f64; 2]> {
        self.poses(frames, dt)
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let v = self.segment_at(k).speed;
                [v * p.yaw.cos(), v * p.yaw.sin()]
            })
            .collect()
    }

    pub fn boxes(&self, frames: usize, dt: f64) -> Vec<OrientedBox> {
        self.poses(frames, dt)
            .iter()
            .map(|p| OrientedBox::new(0.0, 0.0, self.length, self.width, 0.0).with_pose(p))
            .collect()
    }

    pub fn size(&self) -> [f64; 2] {
        [self.length, self.width]
    }
}

/// Ground truth of one agent at one frame, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub id: u32,
    pub bbox: OrientedBox,
    pub velocity: [f64; 2],
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub template: Template,
    pub frames: usize,
    pub dt: f64,
    pub ego: ScriptedAgent,
    pub agents: Vec<ScriptedAgent>,
    /// pose of the roadside unit; its cameras sit at the rig mount height
    pub infrastructure: Pose2D,
    pub ego_rig: CameraRig,
    pub infra_rig: CameraRig,
    /// whether two agents are scripted to collide
    pub collision_scripted: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::Config("scenario needs at least one agent besides the ego".into()));
        }
        if self.frames < 2 || !(self.dt > 0.0) {
            return Err(Error::Config("scenario needs frames >= 2 and dt > 0".into()));
        }
        let mut ids: Vec<u32> = self.all_agents().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.contains(&INFRA_ID) {
            return Err(Error::Config("scenario agent ids must be unique".into()));
        }
        for a in self.all_agents() {
            if !(a.length > 0.0 && a.width > 0.0 && a.height > 0.0) {
                return Err(Error::Config(format!("agent {} has non-positive dimensions", a.id)));
            }
            if a.segments.first().is_none_or(|s| s.start_frame != 0)
                || a.segments.windows(2).any(|w| w[0].start_frame >= w[1].start_frame)
            {
                return Err(Error::Config(format!("agent {} segments must start at 0 and increase", a.id)));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always serializable")
    }

    /// Ego first, then the other agents.
    pub fn all_agents(&self) -> impl Iterator<Item = &ScriptedAgent> {
        std::iter::once(&self.ego).chain(&self.agents)
    }

    pub fn ego_pose(&self, t: usize) -> Pose2D {
        self.ego.poses(t + 1, self.dt)[t]
    }

    /// Ground truth of every agent including the ego at frame `t`.
    pub fn states(&self, t: usize) -> Vec<AgentState> {
        self.all_agents()
            .map(|a| AgentState {
                id: a.id,
                bbox: a.boxes(t + 1, self.dt)[t],
                velocity: a.velocities(t + 1, self.dt)[t],
                height: a.height,
            })
            .collect()
    }

    pub fn paths(&self) -> Vec<AgentPath> {
        self.all_agents()
            .map(|a| AgentPath {
                id: a.id,
                boxes: a.boxes(self.frames, self.dt),
            })
            .collect()
    }

    /// Ground-truth collision events over the whole script, world frame.
    pub fn ground_truth_events(&self, threshold: f64) -> Result<Vec<CollisionEvent>> {
        detect_collisions(&self.paths(), threshold, 0)
    }
}

const CAR: [f64; 3] = [4.5, 2.0, 1.5];
const TRUCK: [f64; 3] = [8.0, 2.6, 3.5];
const LANE: f64 = 3.5;
const MAX_ATTEMPTS: usize = 1000;

struct Draft {
    ego: ScriptedAgent,
    agents: Vec<ScriptedAgent>,
    infrastructure: Pose2D,
    colliders: Option<(u32, u32)>,
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Roadside unit a few meters off a point of interest, facing it.
fn infra_near(p: [f64; 2], side: f64, rng: &mut ChaCha8Rng) -> Pose2D {
    let x = p[0] + rng.gen_range(-4.0..4.0);
    let y = p[1] + side * rng.gen_range(7.0..10.0);
    Pose2D::new(x, y, (p[1] - y).atan2(p[0] - x))
}

/// Agent heading `yaw` that reaches `p` after `frames` frames at `speed`.
fn aimed(id: u32, dims: [f64; 3], p: [f64; 2], yaw: f64, speed: f64, frames: usize, dt: f64) -> ScriptedAgent {
    let back = speed * dt * frames as f64;
    let start = Pose2D::new(p[0] - back * yaw.cos(), p[1] - back * yaw.sin(), yaw);
    ScriptedAgent::constant(id, dims, start, speed)
}

fn draft(template: Template, frames: usize, dt: f64, rng: &mut ChaCha8Rng) -> Draft {
    let ego_speed = rng.gen_range(2.0..4.0);
    let ego = ScriptedAgent::constant(EGO_ID, CAR, Pose2D::IDENTITY, ego_speed);
    let last = frames.saturating_sub(2).max(2);
    match template {
        Template::Crossing => {
            let side = sign(rng);
            let tc = rng.gen_range(frames / 3..=last.max(frames / 3 + 1) - 1).max(1);
            let p = [
                ego_speed * dt * tc as f64 + rng.gen_range(0.0..6.0),
                side * rng.gen_range(6.0..9.0),
            ];
            let yaw1 = rng.gen_range(-0.2..0.2) + if rng.gen_bool(0.5) { 0.0 } else { PI };
            let a1 = aimed(1, CAR, p, yaw1, rng.gen_range(2.5..4.5), tc, dt);
            // comes from the far side so it does not cut through the ego lane first
            let a2 = aimed(2, CAR, p, -side * FRAC_PI_2 + rng.gen_range(-0.2..0.2), rng.gen_range(2.5..4.5), tc, dt);
            let a3 = ScriptedAgent::constant(
                3,
                CAR,
                Pose2D::new(rng.gen_range(10.0..20.0), -side * LANE, PI),
                rng.gen_range(1.0..3.0),
            );
            Draft {
                ego,
                agents: vec![a1, a2, a3],
                infrastructure: infra_near(p, side, rng),
                colliders: Some((1, 2)),
            }
        }
        Template::EgoCrossing => {
            let side = sign(rng);
            let tc = rng.gen_range(frames / 3..=last.max(frames / 3 + 1) - 1).max(1);
            let p = [ego_speed * dt * tc as f64, 0.0];
            let a1 = aimed(1, CAR, p, -side * FRAC_PI_2 + rng.gen_range(-0.2..0.2), rng.gen_range(2.5..4.5), tc, dt);
            let a2 = ScriptedAgent::constant(
                2,
                CAR,
                Pose2D::new(rng.gen_range(-10.0..0.0), -side * LANE, 0.0),
                ego_speed,
            );
            Draft {
                ego,
                agents: vec![a1, a2],
                infrastructure: infra_near(p, side, rng),
                colliders: Some((0, 1)),
            }
        }
        Template::Merging => {
            let side = sign(rng);
            let y1 = side * LANE;
            let v1 = rng.gen_range(2.5..4.0);
            let x1 = rng.gen_range(6.0..12.0);
            let a1 = ScriptedAgent::constant(1, CAR, Pose2D::new(x1, y1, 0.0), v1);
            let mut a2 = ScriptedAgent::constant(
                2,
                CAR,
                Pose2D::new(x1 + rng.gen_range(-1.5..1.5), y1 + side * LANE, 0.0),
                v1 + rng.gen_range(-0.3..0.3),
            );
            let m = rng.gen_range(1..=frames / 3 + 1);
            a2.switch_at(m, a2.segments[0].speed, -side * rng.gen_range(0.4..0.8));
            Draft {
                ego,
                agents: vec![a1, a2],
                infrastructure: infra_near([x1 + v1 * dt * frames as f64 / 2.0, y1], side, rng),
                colliders: Some((1, 2)),
            }
        }
        Template::Following => {
            let v_lead = ego_speed + rng.gen_range(-0.5..0.5);
            let mut lead = ScriptedAgent::constant(1, CAR, Pose2D::new(rng.gen_range(9.0..14.0), 0.0, 0.0), v_lead);
            lead.switch_at(rng.gen_range(2..=frames / 2 + 1), (v_lead - rng.gen_range(0.0..1.0)).max(0.5), 0.0);
            let side = sign(rng);
            let a2 = ScriptedAgent::constant(
                2,
                CAR,
                Pose2D::new(rng.gen_range(-8.0..8.0), side * LANE, 0.0),
                rng.gen_range(2.0..4.5),
            );
            Draft {
                ego,
                agents: vec![lead, a2],
                infrastructure: infra_near([12.0, 0.0], side, rng),
                colliders: None,
            }
        }
        Template::Benign => {
            let n = rng.gen_range(2..=4);
            let agents = (1..=n)
                .map(|id| {
                    let lane = [-2.0, -1.0, 1.0, 2.0][rng.gen_range(0..4)];
                    let oncoming = lane < 0.0;
                    let x = rng.gen_range(-15.0..20.0);
                    let yaw = if oncoming { PI } else { 0.0 };
                    ScriptedAgent::constant(id, CAR, Pose2D::new(x, lane * LANE, yaw), rng.gen_range(1.0..4.5))
                })
                .collect();
            Draft {
                ego,
                agents,
                infrastructure: infra_near([10.0, 0.0], sign(rng), rng),
                colliders: None,
            }
        }
        Template::Occluded => {
            let ego = ScriptedAgent::constant(EGO_ID, CAR, Pose2D::IDENTITY, 0.0);
            let d = rng.gen_range(6.5..8.0);
            let truck = ScriptedAgent::constant(1, TRUCK, Pose2D::new(d, 0.0, 0.0), 0.0);
            let car = ScriptedAgent::constant(
                2,
                CAR,
                Pose2D::new(d + TRUCK[0] / 2.0 + rng.gen_range(5.0..7.0), rng.gen_range(-0.3..0.3), 0.0),
                0.0,
            );
            let side = sign(rng);
            let c = car.start.position();
            Draft {
                ego,
                agents: vec![truck, car],
                infrastructure: Pose2D::new(c[0] + rng.gen_range(-1.0..1.0), side * rng.gen_range(9.0..12.0), -side * FRAC_PI_2),
                colliders: None,
            }
        }
    }
}

/// Colliding agents come to rest the frame after first contact.
fn stop_after_contact(d: &mut Draft, events: &[CollisionEvent]) {
    let Some((a, b)) = d.colliders else { return };
    let Some(e) = events.iter().find(|e| e.pair() == (a, b)) else { return };
    let stop = e.timestamp as usize + 1;
    for agent in std::iter::once(&mut d.ego).chain(d.agents.iter_mut()) {
        if agent.id == a || agent.id == b {
            agent.switch_at(stop, 0.0, 0.0);
        }
    }
}

fn contract_holds(template: Template, events: &[CollisionEvent], colliders: Option<(u32, u32)>) -> bool {
    match colliders {
        Some(pair) => events.len() == 1 && events[0].pair() == pair && events[0].timestamp > 0,
        None => events.len() == template.expected_collisions(),
    }
}

/// Deterministic scenario for `(seed, template)`. Random layouts are drawn
/// until the template's ground-truth contract holds: `crossing`,
/// `merging` and `ego_crossing` have exactly one collision, the others none.
pub fn generate_scenario(seed: u64, template: Template, cfg: &Config) -> Result<Scenario> {
    let frames = cfg.scenario.frames;
    let dt = cfg.scenario.dt;
    let threshold = cfg.accident.threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut d = draft(template, frames, dt, &mut rng);
        let mut scenario = Scenario {
            seed,
            template,
            frames,
            dt,
            ego: d.ego.clone(),
            agents: d.agents.clone(),
            infrastructure: d.infrastructure,
            ego_rig: cfg.ego_rig()?,
            infra_rig: cfg.infra_rig()?,
            collision_scripted: d.colliders.is_some(),
        };
        let events = scenario.ground_truth_events(threshold)?;
        if !contract_holds(template, &events, d.colliders) {
            continue;
        }
        stop_after_contact(&mut d, &events);
        scenario.ego = d.ego;
        scenario.agents = d.agents;
        let events = scenario.ground_truth_events(threshold)?;
        if contract_holds(template, &events, d.colliders) {
            scenario.infrastructure.yaw = normalize_angle(scenario.infrastructure.yaw);
            scenario.validate()?;
            return Ok(scenario);
        }
    }
    Err(Error::Config(format!(
        "template `{template}` found no valid layout for seed {seed} with {frames} frames at dt {dt}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_and_arc_integration() {
        let a = ScriptedAgent::constant(1, CAR, Pose2D::new(1.0, 2.0, FRAC_PI_2), 2.0);
        let p = a.poses(3, 0.5);
        assert!((p[2].x - 1.0).abs() < 1e-12 && (p[2].y - 4.0).abs() < 1e-12);

        let mut turn = ScriptedAgent::constant(1, CAR, Pose2D::IDENTITY, PI / 2.0);
        turn.switch_at(0, PI / 2.0, PI / 2.0);
        // a quarter circle of radius 1 after one second
        let p = turn.poses(3, 0.5);
        assert!((p[2].x - 1.0).abs() < 1e-12 && (p[2].y - 1.0).abs() < 1e-12);
        assert!((p[2].yaw - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn velocity_follows_active_segment() {
        let mut a = ScriptedAgent::constant(1, CAR, Pose2D::IDENTITY, 2.0);
        a.switch_at(2, 0.0, 0.0);
        let v = a.velocities(4, 0.5);
        assert_eq!(v[1], [2.0, 0.0]);
        assert_eq!(v[2], [0.0, 0.0]);
        let p = a.poses(4, 0.5);
        assert_eq!(p[2].x, p[3].x);
    }

    #[test]
    fn templates_meet_their_contracts() {
        let cfg = Config::default();
        for t in Template::ALL {
            for seed in 0..5 {
                let s = generate_scenario(seed, t, &cfg).unwrap();
                let ev = s.ground_truth_events(cfg.accident.threshold).unwrap();
                assert_eq!(ev.len(), t.expected_collisions(), "{t} seed {seed}: {ev:?}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_round_trips() {
        let cfg = Config::default();
        let a = generate_scenario(7, Template::Crossing, &cfg).unwrap();
        let b = generate_scenario(7, Template::Crossing, &cfg).unwrap();
        assert_eq!(a.to_toml(), b.to_toml());
        assert_eq!(Scenario::parse(&a.to_toml()).unwrap(), a);
        assert_ne!(generate_scenario(8, Template::Crossing, &cfg).unwrap(), a);
    }

    #[test]
    fn template_names_parse() {
        for t in Template::ALL {
            assert_eq!(t.name().parse::<Template>().unwrap(), t);
        }
        assert!(matches!("roundabout".parse::<Template>(), Err(Error::Config(_))));
    }
}
