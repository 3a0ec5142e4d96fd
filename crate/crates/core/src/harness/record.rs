//! On-disk run records: a directory of newline-terminated ASCII files.
//!
//! `frames.txt` holds one line per item, each starting with its kind and
//! frame index:
//!
//! ```text
//! frame  t ego_x ego_y ego_yaw
//! gt     t id x y yaw length width vx vy
//! v2x    t bytes valid_cells sha256
//! bev    t ego_sha256 coop_sha256
//! heat   t rows cols norm...
//! track  t record_id track_id source|- x y yaw length width vx vy coast feature_sha256
//! motion t id mode score x1 y1 ... xT yT
//! event  t timestamp id_a id_b x y min_distance
//! ```
//!
//! Geometry is in the world frame, reals use six fractional digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::pipeline::{record_id, FrameOutput};
use super::scenario::{Scenario, Template};
use super::Config;
use crate::accident::CollisionEvent;
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose2D};

/// Files whose bytes are fully determined by (seed, config, scenario).
pub const RECORD_FILES: [&str; 6] = [
    "meta.txt",
    "config.txt",
    "scenario.txt",
    "frames.txt",
    "events_pred.txt",
    "events_gt.txt",
];
pub const TIMING_FILE: &str = "timing.txt";

/// Wall-clock seconds per pipeline stage, summed over frames.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTiming {
    pub render: f64,
    pub encode: f64,
    pub fusion: f64,
    pub perception: f64,
    pub motion: f64,
    pub accident: f64,
}

impl StageTiming {
    pub const STAGES: [&'static str; 6] = ["render", "encode", "fusion", "perception", "motion", "accident"];

    pub fn values(&self) -> [f64; 6] {
        [self.render, self.encode, self.fusion, self.perception, self.motion, self.accident]
    }

    fn from_values(v: [f64; 6]) -> Self {
        Self {
            render: v[0],
            encode: v[1],
            fusion: v[2],
            perception: v[3],
            motion: v[4],
            accident: v[5],
        }
    }

    pub fn add(&self, other: &StageTiming) -> StageTiming {
        let (a, b) = (self.values(), other.values());
        Self::from_values(std::array::from_fn(|k| a[k] + b[k]))
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub id: u32,
    pub bbox: OrientedBox,
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct V2xSummary {
    pub bytes: usize,
    pub valid_cells: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub id: u32,
    pub track_id: u32,
    pub source: Option<u32>,
    pub bbox: OrientedBox,
    pub velocity: [f64; 2],
    pub coast: u32,
    pub feature_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRecord {
    pub id: u32,
    pub mode: usize,
    pub score: f64,
    pub path: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: u32,
    pub ego_pose: Pose2D,
    pub truth: Vec<TruthRecord>,
    pub v2x: Option<V2xSummary>,
    pub ego_bev_sha256: String,
    pub coop_bev_sha256: String,
    /// per-cell L2 norm of the cooperative map, `rows x cols`
    pub heat: (usize, usize, Vec<f64>),
    pub tracks: Vec<TrackRecord>,
    pub modes: Vec<ModeRecord>,
    /// predictions issued at this frame
    pub events: Vec<CollisionEvent>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_f64(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl FrameRecord {
    pub fn from_output(out: &FrameOutput) -> Self {
        let ego_id = out.truth.first().map_or(0, |s| s.id);
        let frame = out.motion.frame;
        Self {
            frame: out.frame as u32,
            ego_pose: out.ego_pose,
            truth: out
                .truth
                .iter()
                .map(|s| TruthRecord {
                    id: s.id,
                    bbox: s.bbox,
                    velocity: s.velocity,
                })
                .collect(),
            v2x: out.v2x.as_ref().map(|ex| V2xSummary {
                bytes: ex.encoded.len(),
                valid_cells: ex.mask.iter().filter(|&&m| m > 0.0).count(),
                sha256: sha256_hex(&ex.encoded),
            }),
            ego_bev_sha256: sha256_f64(out.ego_bev.data.data()),
            coop_bev_sha256: sha256_f64(out.fused.data.data()),
            heat: (out.fused.grid.h, out.fused.grid.w, out.fused.cell_norms()),
            tracks: out
                .tracks
                .tracks
                .iter()
                .map(|t| TrackRecord {
                    id: record_id(t.id, t.source, ego_id),
                    track_id: t.id,
                    source: t.source,
                    bbox: t.bbox,
                    velocity: t.velocity,
                    coast: t.coast,
                    feature_sha256: sha256_f64(&t.feature),
                })
                .collect(),
            modes: out
                .motion
                .agents
                .iter()
                .flat_map(|a| {
                    a.trajectories.iter().zip(&a.scores).enumerate().map(move |(k, (traj, &score))| ModeRecord {
                        id: a.id,
                        mode: k,
                        score,
                        path: traj.iter().map(|p| frame.transform_point(*p)).collect(),
                    })
                })
                .collect(),
            events: out.events.clone(),
        }
    }

    fn write_lines(&self, s: &mut String) {
        let t = self.frame;
        let p = &self.ego_pose;
        let _ = writeln!(s, "frame {t} {:.6} {:.6} {:.6}", p.x, p.y, p.yaw);
        for g in &self.truth {
            let b = &g.bbox;
            let _ = writeln!(
                s,
                "gt {t} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
                g.id, b.x, b.y, b.yaw, b.length, b.width, g.velocity[0], g.velocity[1]
            );
        }
        if let Some(v) = &self.v2x {
            let _ = writeln!(s, "v2x {t} {} {} {}", v.bytes, v.valid_cells, v.sha256);
        }
        let _ = writeln!(s, "bev {t} {} {}", self.ego_bev_sha256, self.coop_bev_sha256);
        let (h, w, heat) = &self.heat;
        let _ = write!(s, "heat {t} {h} {w}");
        for v in heat {
            let _ = write!(s, " {v:.6}");
        }
        s.push('\n');
        for tr in &self.tracks {
            let b = &tr.bbox;
            let src = tr.source.map_or("-".to_string(), |x| x.to_string());
            let _ = writeln!(
                s,
                "track {t} {} {} {src} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {} {}",
                tr.id, tr.track_id, b.x, b.y, b.yaw, b.length, b.width, tr.velocity[0], tr.velocity[1], tr.coast, tr.feature_sha256
            );
        }
        for m in &self.modes {
            let _ = write!(s, "motion {t} {} {} {:.6}", m.id, m.mode, m.score);
            for q in &m.path {
                let _ = write!(s, " {:.6} {:.6}", q[0], q[1]);
            }
            s.push('\n');
        }
        for e in &self.events {
            let _ = writeln!(
                s,
                "event {t} {} {} {} {:.6} {:.6} {:.6}",
                e.timestamp, e.id_a, e.id_b, e.position[0], e.position[1], e.min_distance
            );
        }
    }
}

/// Everything one `run` produces for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub template: Template,
    pub config: Config,
    pub scenario: Scenario,
    pub frames: Vec<FrameRecord>,
    /// first warning per pair over the run, world frame
    pub events_pred: Vec<CollisionEvent>,
    pub events_gt: Vec<CollisionEvent>,
    /// not part of the deterministic record
    pub timing: Option<StageTiming>,
}

fn events_text(events: &[CollisionEvent]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}

fn parse_events(text: &str) -> Result<Vec<CollisionEvent>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(str::parse).collect()
}

struct Fields<'a> {
    line: &'a str,
    it: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn new(line: &'a str) -> Self {
        Self {
            line,
            it: line.split_whitespace(),
        }
    }

    fn err(&self) -> Error {
        Error::Record(format!("bad record line `{}`", self.line))
    }

    fn word(&mut self) -> Result<&'a str> {
        self.it.next().ok_or_else(|| self.err())
    }

    fn num<T: std::str::FromStr>(&mut self) -> Result<T> {
        let w = self.word()?;
        w.parse().map_err(|_| self.err())
    }

    fn rest(&mut self) -> Result<Vec<f64>> {
        let line = self.line;
        self.it
            .by_ref()
            .map(|w| w.parse().map_err(|_| Error::Record(format!("bad record line `{line}`"))))
            .collect()
    }
}

fn parse_frames(text: &str) -> Result<Vec<FrameRecord>> {
    let mut frames: Vec<FrameRecord> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut f = Fields::new(line);
        let kind = f.word()?;
        let t: u32 = f.num()?;
        if kind == "frame" {
            if frames.last().is_some_and(|p| p.frame >= t) {
                return Err(Error::Record(format!("frames out of order at {t}")));
            }
            frames.push(FrameRecord {
                frame: t,
                ego_pose: Pose2D::new(f.num()?, f.num()?, f.num()?),
                truth: Vec::new(),
                v2x: None,
                ego_bev_sha256: String::new(),
                coop_bev_sha256: String::new(),
                heat: (0, 0, Vec::new()),
                tracks: Vec::new(),
                modes: Vec::new(),
                events: Vec::new(),
            });
            continue;
        }
        let cur = frames
            .last_mut()
            .filter(|c| c.frame == t)
            .ok_or_else(|| Error::Record(format!("line outside its frame: `{line}`")))?;
        match kind {
            "gt" => {
                let id = f.num()?;
                let (x, y, yaw, l, w) = (f.num()?, f.num()?, f.num()?, f.num()?, f.num()?);
                cur.truth.push(TruthRecord {
                    id,
                    bbox: OrientedBox::new(x, y, l, w, yaw),
                    velocity: [f.num()?, f.num()?],
                });
            }
            "v2x" => {
                cur.v2x = Some(V2xSummary {
                    bytes: f.num()?,
                    valid_cells: f.num()?,
                    sha256: f.word()?.to_string(),
                });
            }
            "bev" => {
                cur.ego_bev_sha256 = f.word()?.to_string();
                cur.coop_bev_sha256 = f.word()?.to_string();
            }
            "heat" => {
                let (h, w): (usize, usize) = (f.num()?, f.num()?);
                let v = f.rest()?;
                if v.len() != h * w {
                    return Err(f.err());
                }
                cur.heat = (h, w, v);
            }
            "track" => {
                let id = f.num()?;
                let track_id = f.num()?;
                let src = f.word()?;
                let source = if src == "-" { None } else { Some(src.parse().map_err(|_| f.err())?) };
                let (x, y, yaw, l, w) = (f.num()?, f.num()?, f.num()?, f.num()?, f.num()?);
                cur.tracks.push(TrackRecord {
                    id,
                    track_id,
                    source,
                    bbox: OrientedBox::new(x, y, l, w, yaw),
                    velocity: [f.num()?, f.num()?],
                    coast: f.num()?,
                    feature_sha256: f.word()?.to_string(),
                });
            }
            "motion" => {
                let (id, mode, score) = (f.num()?, f.num()?, f.num()?);
                let v = f.rest()?;
                if v.len() % 2 != 0 {
                    return Err(f.err());
                }
                cur.modes.push(ModeRecord {
                    id,
                    mode,
                    score,
                    path: v.chunks(2).map(|c| [c[0], c[1]]).collect(),
                });
            }
            "event" => {
                cur.events.push(CollisionEvent {
                    timestamp: f.num()?,
                    id_a: f.num()?,
                    id_b: f.num()?,
                    position: [f.num()?, f.num()?],
                    min_distance: f.num()?,
                });
            }
            _ => return Err(f.err()),
        }
    }
    Ok(frames)
}

impl RunRecord {
    pub fn meta_text(&self) -> String {
        format!(
            "seed {}\ntemplate {}\nframes {}\nconfig_hash {}\n",
            self.seed,
            self.template,
            self.frames.len(),
            self.config.hash()
        )
    }

    pub fn frames_text(&self) -> String {
        let mut s = String::new();
        for f in &self.frames {
            f.write_lines(&mut s);
        }
        s
    }

    /// Contents of every deterministic file, in [`RECORD_FILES`] order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let texts = [
            self.meta_text(),
            self.config.to_toml(),
            self.scenario.to_toml(),
            self.frames_text(),
            events_text(&self.events_pred),
            events_text(&self.events_gt),
        ];
        RECORD_FILES.into_iter().zip(texts).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, text) in self.files() {
            fs::write(dir.join(name), text)?;
        }
        if let Some(t) = &self.timing {
            let mut s = String::new();
            for (name, v) in StageTiming::STAGES.iter().zip(t.values()) {
                let _ = writeln!(s, "{name} {v:.6}");
            }
            fs::write(dir.join(TIMING_FILE), s)?;
        }
        Ok(())
    }

    /// Reads a record back. Reals come back rounded to the precision they
    /// were written with; the config hash in `meta.txt` must match.
    pub fn read(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Record(format!("{}: {e}", dir.join(name).display())))
        };
        let meta = read("meta.txt")?;
        let mut seed = None;
        let mut hash = None;
        for line in meta.lines() {
            match line.split_once(' ') {
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("config_hash", v)) => hash = Some(v.to_string()),
                _ => {}
            }
        }
        let seed = seed.ok_or_else(|| Error::Record("meta.txt lacks a seed".into()))?;
        let config = Config::parse(&read("config.txt")?)?;
        if hash.as_deref() != Some(config.hash().as_str()) {
            return Err(Error::Record("config hash does not match config.txt".into()));
        }
        let scenario = Scenario::parse(&read("scenario.txt")?)?;
        let timing = read(TIMING_FILE).ok().and_then(|text| {
            let v: Vec<f64> = text
                .lines()
                .filter_map(|l| l.split_once(' ').and_then(|(_, v)| v.parse().ok()))
                .collect();
            (v.len() == 6).then(|| StageTiming::from_values(std::array::from_fn(|k| v[k])))
        });
        Ok(Self {
            seed,
            template: scenario.template,
            config,
            frames: parse_frames(&read("frames.txt")?)?,
            events_pred: parse_events(&read("events_pred.txt")?)?,
            events_gt: parse_events(&read("events_gt.txt")?)?,
            scenario,
            timing,
        })
    }
}
