//! Synthetic scenarios, rendering, end-to-end runs, records, metrics and
//! plots.

mod config;
mod eval;
mod pipeline;
mod plot;
mod record;
mod render;
mod scenario;

pub use config::{CameraConfig, Config, GridConfig, RunConfig, ScenarioConfig, REFERENCE_CONFIG};
pub use eval::{evaluate, id_switches, RecordReport, Report};
pub use pipeline::{
    record_id, run_batch, run_pipeline, run_pipeline_with, FrameOutput, Models, Pipeline, V2xExchange,
    UNMATCHED_ID_BASE,
};
pub use plot::{bev_svg, emit_plots, traj_svg, PLOT_KINDS};
pub use record::{
    sha256_f64, sha256_hex, FrameRecord, ModeRecord, RunRecord, StageTiming, TrackRecord, TruthRecord, V2xSummary,
    RECORD_FILES, TIMING_FILE,
};
pub use render::{agent_color, render_rig, render_views, Viewpoint, GROUND, SKY};
pub use scenario::{generate_scenario, AgentState, Scenario, ScriptedAgent, Segment, Template, EGO_ID, INFRA_ID};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_is_the_default() {
        assert_eq!(Config::parse(REFERENCE_CONFIG).unwrap(), Config::default());
    }

    #[test]
    fn config_round_trips() {
        let mut cfg = Config::default();
        cfg.run.v2x = false;
        cfg.accident.threshold = 0.75;
        cfg.motion.anchor_curvatures = vec![0.0, 0.05];
        cfg.motion.modes = 2;
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_ne!(cfg.hash(), Config::default().hash());
    }

    #[test]
    fn config_errors_are_config_errors() {
        for bad in [
            "[grid]\nrows = 1",
            "[encoder]\nheads = 5",
            "[motion]\nmodes = 4",
            "[scenario]\ndt = 0.25",
            "[camera]\nimage_width = 90",
            "[nope]\nx = 1",
            "grid = 3",
        ] {
            assert!(matches!(Config::parse(bad), Err(crate::Error::Config(_))), "{bad}");
        }
    }
}
