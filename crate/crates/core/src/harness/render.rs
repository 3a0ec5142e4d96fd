//! Ray-cast rasterizer for scripted scenes: a flat ground plane under a
//! flat sky, agents as flat-shaded cuboids standing on the ground.

use super::scenario::{AgentState, Scenario};
use crate::bev::MultiViewImages;
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Pose2D};
use crate::tensor::DenseTensor;

pub const SKY: [f64; 3] = [0.55, 0.7, 0.9];
pub const GROUND: [f64; 3] = [0.35, 0.35, 0.32];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viewpoint {
    Ego,
    Infrastructure,
}

/// Base color of an agent; distinct ids get distinct hues.
pub fn agent_color(id: u32) -> [f64; 3] {
    let h = (id as f64 * 0.618_033_988_749_895).fract();
    let k = |n: f64| {
        let x = (n + h * 6.0) % 6.0;
        (1.0 - (x.min(4.0 - x).clamp(0.0, 1.0))) * 0.7 + 0.3
    };
    [k(5.0), k(3.0), k(1.0)]
}

/// Ray/cuboid intersection in the box frame (slab test). Returns the entry
/// distance and the index of the entry face (0,1: x; 2,3: y; 4: top).
fn hit_cuboid(o: [f64; 3], d: [f64; 3], half: [f64; 2], height: f64) -> Option<(f64, usize)> {
    let lo = [-half[0], -half[1], 0.0];
    let hi = [half[0], half[1], height];
    let mut t_in = f64::NEG_INFINITY;
    let mut t_out = f64::INFINITY;
    let mut face = 0;
    for a in 0..3 {
        if d[a].abs() < 1e-12 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
            continue;
        }
        let (t0, t1) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
        let (near, far, f) = if t0 < t1 { (t0, t1, 2 * a) } else { (t1, t0, 2 * a + 1) };
        if near > t_in {
            t_in = near;
            face = f;
        }
        t_out = t_out.min(far);
    }
    (t_in <= t_out && t_in > 0.0).then_some((t_in, face.min(4)))
}

fn shade(base: [f64; 3], face: usize) -> [f64; 3] {
    let f = [0.8, 0.6, 0.7, 0.5, 1.0][face];
    base.map(|c| c * f)
}

struct Obstacle {
    to_local: Pose2D,
    half: [f64; 2],
    height: f64,
    color: [f64; 3],
}

/// Renders one image per camera of `rig` mounted on `pose`. `states` are
/// drawn as cuboids; each pixel shows the nearest surface along its ray.
pub fn render_rig(rig: &CameraRig, pose: &Pose2D, states: &[AgentState], timestamp: u32) -> Result<MultiViewImages> {
    let obstacles: Vec<Obstacle> = states
        .iter()
        .map(|s| Obstacle {
            to_local: s.bbox.pose().inverse(),
            half: [s.bbox.length / 2.0, s.bbox.width / 2.0],
            height: s.height,
            color: agent_color(s.id),
        })
        .collect();
    let views = rig
        .views
        .iter()
        .map(|cam| {
            let mut img = DenseTensor::zeros([cam.height, cam.width, 3]);
            let mount = pose.transform_point([cam.mount_x, cam.mount_y]);
            let origin = [mount[0], mount[1], cam.mount_height];
            let data = img.data_mut();
            for v in 0..cam.height {
                for u in 0..cam.width {
                    let r = cam.camera_dir_to_agent(cam.pixel_ray(u as f64 + 0.5, v as f64 + 0.5));
                    let [dx, dy] = pose.rotate([r[0], r[1]]);
                    let dir = [dx, dy, r[2]];
                    let mut best = f64::INFINITY;
                    let mut color = if dir[2] < 0.0 {
                        best = -origin[2] / dir[2];
                        GROUND
                    } else {
                        SKY
                    };
                    for ob in &obstacles {
                        let [ox, oy] = ob.to_local.transform_point([origin[0], origin[1]]);
                        let [lx, ly] = ob.to_local.rotate([dir[0], dir[1]]);
                        if let Some((t, face)) = hit_cuboid([ox, oy, origin[2]], [lx, ly, dir[2]], ob.half, ob.height) {
                            if t < best {
                                best = t;
                                color = shade(ob.color, face);
                            }
                        }
                    }
                    let k = (v * cam.width + u) * 3;
                    data[k..k + 3].copy_from_slice(&color);
                }
            }
            img
        })
        .collect();
    MultiViewImages::new(views, timestamp)
}

/// Camera images of frame `t` seen from the ego vehicle (which does not see
/// itself) or from the roadside unit.
pub fn render_views(scenario: &Scenario, t: usize, viewpoint: Viewpoint) -> Result<MultiViewImages> {
    if t >= scenario.frames {
        return Err(Error::invalid(format!("frame {t} out of range ({} frames)", scenario.frames)));
    }
    let states = scenario.states(t);
    match viewpoint {
        Viewpoint::Ego => {
            let others: Vec<AgentState> = states.into_iter().filter(|s| s.id != scenario.ego.id).collect();
            render_rig(&scenario.ego_rig, &scenario.ego_pose(t), &others, t as u32)
        }
        Viewpoint::Infrastructure => render_rig(&scenario.infra_rig, &scenario.infrastructure, &states, t as u32),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox;

    fn rig() -> CameraRig {
        CameraRig::surround(4, 1.6, 1.3, 48, 32).unwrap()
    }

    fn foreground(img: &DenseTensor) -> usize {
        img.data()
            .chunks(3)
            .filter(|p| p != &SKY.as_slice() && p != &GROUND.as_slice())
            .count()
    }

    #[test]
    fn empty_world_is_two_tone() {
        let imgs = render_rig(&rig(), &Pose2D::IDENTITY, &[], 0).unwrap();
        for img in &imgs.views {
            assert_eq!(foreground(img), 0);
            // horizon at the principal row: top half sky, bottom half ground
            assert_eq!(&img.data()[..3], SKY.as_slice());
            let n = img.len();
            assert_eq!(&img.data()[n - 3..], GROUND.as_slice());
        }
    }

    #[test]
    fn agent_ahead_shows_in_front_view_only() {
        let s = AgentState {
            id: 1,
            bbox: OrientedBox::new(10.0, 0.0, 4.5, 2.0, 0.3),
            velocity: [0.0; 2],
            height: 1.5,
        };
        let imgs = render_rig(&rig(), &Pose2D::IDENTITY, &[s], 0).unwrap();
        assert!(foreground(&imgs.views[0]) > 0);
        assert_eq!(foreground(&imgs.views[2]), 0);
        // the projected center is covered
        let hit = rig().views[0].project([10.0, 0.0, 0.75]);
        let k = ((hit.v as usize) * 48 + hit.u as usize) * 3;
        assert_ne!(&imgs.views[0].data()[k..k + 3], GROUND.as_slice());
        assert_eq!(imgs, render_rig(&rig(), &Pose2D::IDENTITY, &[s], 0).unwrap());
    }

    #[test]
    fn nearer_agent_occludes() {
        let near = AgentState {
            id: 1,
            bbox: OrientedBox::new(6.0, 0.0, 4.0, 2.6, 0.0),
            velocity: [0.0; 2],
            height: 3.5,
        };
        let far = AgentState {
            id: 2,
            bbox: OrientedBox::new(15.0, 0.0, 4.5, 2.0, 0.0),
            velocity: [0.0; 2],
            height: 1.5,
        };
        let both = render_rig(&rig(), &Pose2D::IDENTITY, &[far, near], 0).unwrap();
        let only_near = render_rig(&rig(), &Pose2D::IDENTITY, &[near], 0).unwrap();
        assert_eq!(both, only_near);
    }
}
