//! SVG plots of a run record: per frame, a heatmap of the cooperative BEV
//! and a top-down view of boxes, trajectory fans and collision markers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::record::{FrameRecord, RunRecord};
use super::render::agent_color;
use crate::error::Result;
use crate::geometry::OrientedBox;

pub const PLOT_KINDS: [&str; 2] = ["bev", "traj"];
const CELL_PX: f64 = 8.0;

fn rgb(c: [f64; 3]) -> String {
    let b = c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
    format!("#{:02x}{:02x}{:02x}", b[0], b[1], b[2])
}

fn header(s: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    );
}

/// Heatmap of per-cell feature norms, row 0 (most negative y) at the bottom.
pub fn bev_svg(frame: &FrameRecord) -> String {
    let (h, w, heat) = &frame.heat;
    let (h, w) = (*h, *w);
    let max = heat.iter().cloned().fold(0.0f64, f64::max);
    let mut s = String::new();
    header(&mut s, w as f64 * CELL_PX, h as f64 * CELL_PX);
    let _ = writeln!(s, "<g id=\"heatmap\">");
    for i in 0..h {
        for j in 0..w {
            let v = if max > 0.0 { heat[i * w + j] / max } else { 0.0 };
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{CELL_PX:.1}\" height=\"{CELL_PX:.1}\" fill=\"{}\"/>",
                j as f64 * CELL_PX,
                (h - 1 - i) as f64 * CELL_PX,
                rgb([v, v * 0.6, 1.0 - v])
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Top-down view in the ego frame of this frame, 1 m = `CELL_PX` pixels,
/// same extent as the BEV grid.
pub fn traj_svg(frame: &FrameRecord, resolution: f64) -> String {
    let (h, w, _) = frame.heat;
    let (width, height) = (w as f64 * CELL_PX, h as f64 * CELL_PX);
    let scale = CELL_PX / resolution;
    let to_local = frame.ego_pose.inverse();
    let px = |p: [f64; 2]| {
        let [x, y] = to_local.transform_point(p);
        (width / 2.0 + x * scale, height / 2.0 - y * scale)
    };
    let poly = |b: &OrientedBox| -> String {
        let pose = b.pose();
        let (hl, hw) = (b.length / 2.0, b.width / 2.0);
        [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]]
            .iter()
            .map(|c| {
                let (x, y) = px(pose.transform_point(*c));
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    header(&mut s, width, height);
    let _ = writeln!(s, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#f4f4f0\"/>");
    let _ = writeln!(s, "<g id=\"truth\">");
    for g in &frame.truth {
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"{}\" stroke=\"#222222\" stroke-width=\"1\"/>",
            poly(&g.bbox),
            rgb(agent_color(g.id))
        );
    }
    let _ = writeln!(s, "</g>\n<g id=\"trajectories\">");
    for m in &frame.modes {
        let pts: Vec<String> = m
            .path
            .iter()
            .map(|p| {
                let (x, y) = px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" stroke-opacity=\"{:.3}\"/>",
            pts.join(" "),
            rgb(agent_color(m.id.min(u32::MAX - 1))),
            0.25 + 0.75 * m.score.clamp(0.0, 1.0)
        );
    }
    let _ = writeln!(s, "</g>");
    if !frame.events.is_empty() {
        let _ = writeln!(s, "<g id=\"collisions\">");
        for e in &frame.events {
            let (x, y) = px(e.position);
            let _ = writeln!(
                s,
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"6\" fill=\"none\" stroke=\"#d00000\" stroke-width=\"2\"><title>t={} {}-{}</title></circle>",
                e.timestamp, e.id_a, e.id_b
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `frame_<t>_<kind>.svg` for every frame and kind; returns the paths
/// in write order.
pub fn emit_plots(record: &RunRecord, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut paths = Vec::new();
    for f in &record.frames {
        for (kind, text) in PLOT_KINDS
            .iter()
            .zip([bev_svg(f), traj_svg(f, record.config.grid.resolution)])
        {
            let p = out.join(format!("frame_{}_{kind}.svg", f.frame));
            fs::write(&p, text)?;
            paths.push(p);
        }
    }
    Ok(paths)
}
