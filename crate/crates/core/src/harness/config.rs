use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accident::AccidentConfig;
use crate::agents::{MotionConfig, TrackingConfig};
use crate::bev::BevEncoderConfig;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::geometry::{BevGrid, CameraRig, Pose2D};

/// The reference configuration shipped with the crate; every default value
/// appears in it.
pub const REFERENCE_CONFIG: &str = include_str!("../../config/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    /// meters per cell
    pub resolution: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rows: 50,
            cols: 50,
            resolution: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub views: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// horizontal field of view, radians
    pub fov: f64,
    pub ego_mount_height: f64,
    pub infra_views: usize,
    pub infra_mount_height: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            views: 6,
            image_width: 96,
            image_height: 64,
            fov: 1.3,
            ego_mount_height: 1.6,
            infra_views: 6,
            infra_mount_height: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub frames: usize,
    /// seconds between frames
    pub dt: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { frames: 12, dt: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub v2x: bool,
    /// seed of every network weight
    pub model_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            v2x: true,
            model_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub camera: CameraConfig,
    pub scenario: ScenarioConfig,
    pub encoder: BevEncoderConfig,
    pub fusion: FusionConfig,
    pub tracking: TrackingConfig,
    pub motion: MotionConfig,
    pub accident: AccidentConfig,
    pub run: RunConfig,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Checks cross-field constraints that would otherwise only surface in
    /// the middle of a run.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.rows < 2 || g.cols < 2 || !(g.resolution > 0.0) {
            return Err(config_err("grid needs rows, cols >= 2 and resolution > 0"));
        }
        let c = self.encoder.channels;
        for (name, heads) in [
            ("encoder", self.encoder.heads),
            ("fusion", self.fusion.heads),
            ("tracking", self.tracking.heads),
            ("motion", self.motion.heads),
        ] {
            if heads == 0 || !c.is_multiple_of(heads) {
                return Err(config_err(format!("{name}.heads = {heads} does not divide {c} channels")));
            }
        }
        if self.encoder.layers == 0 {
            return Err(config_err("encoder.layers must be >= 1"));
        }
        let stride = 1usize << (self.encoder.backbone_channels.len() + 1);
        let cam = &self.camera;
        if !cam.image_width.is_multiple_of(stride) || !cam.image_height.is_multiple_of(stride) {
            return Err(config_err(format!(
                "image size {}x{} must be divisible by the backbone stride {stride}",
                cam.image_width, cam.image_height
            )));
        }
        if !(cam.fov > 0.0 && cam.fov < std::f64::consts::PI) || cam.views == 0 || cam.infra_views == 0 {
            return Err(config_err("cameras need fov in (0, pi) and at least one view"));
        }
        if self.scenario.frames < 2 || !(self.scenario.dt > 0.0) {
            return Err(config_err("scenario needs frames >= 2 and dt > 0"));
        }
        if self.tracking.dt != self.scenario.dt || self.motion.dt != self.scenario.dt {
            return Err(config_err("tracking.dt and motion.dt must equal scenario.dt"));
        }
        if self.motion.modes == 0 || self.motion.modes > self.motion.anchor_curvatures.len() {
            return Err(config_err("motion.modes must be between 1 and the number of anchor curvatures"));
        }
        if self.motion.horizon == 0 {
            return Err(config_err("motion.horizon must be >= 1"));
        }
        if !(self.accident.threshold >= 0.0) || !(self.accident.dist_tol >= 0.0) {
            return Err(config_err("accident threshold and dist_tol must be >= 0"));
        }
        Ok(())
    }

    /// BEV grid centered on `origin`.
    pub fn grid_at(&self, origin: Pose2D) -> BevGrid {
        BevGrid::new(self.grid.rows, self.grid.cols, self.grid.resolution, origin).expect("validated grid")
    }

    pub fn ego_rig(&self) -> Result<CameraRig> {
        let c = &self.camera;
        CameraRig::surround(c.views, c.ego_mount_height, c.fov, c.image_width, c.image_height)
    }

    pub fn infra_rig(&self) -> Result<CameraRig> {
        let c = &self.camera;
        CameraRig::surround(c.infra_views, c.infra_mount_height, c.fov, c.image_width, c.image_height)
    }
}
