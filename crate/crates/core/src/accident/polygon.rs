use crate::error::{Error, Result};
use crate::geometry::OrientedBox;

/// Rectangle footprint of a box, vertices counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintPolygon {
    pub vertices: [[f64; 2]; 4],
}

impl FootprintPolygon {
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        (0..4)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % 4]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0
    }

    pub fn centroid(&self) -> [f64; 2] {
        let s = self.vertices.iter().fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
        [s[0] / 4.0, s[1] / 4.0]
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        (0..4).map(move |i| (self.vertices[i], self.vertices[(i + 1) % 4]))
    }
}

pub fn footprint(b: &OrientedBox) -> Result<FootprintPolygon> {
    if !(b.length > 0.0 && b.width > 0.0) {
        return Err(Error::invalid(format!(
            "box dimensions must be positive, got {} x {}",
            b.length, b.width
        )));
    }
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    let pose = b.pose();
    let corners = [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]];
    Ok(FootprintPolygon {
        vertices: corners.map(|c| pose.transform_point(c)),
    })
}

/// Distance between two footprints and a witness point on each. Overlapping
/// or touching footprints are at distance 0 and both witnesses are the
/// midpoint of the two centroids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub distance: f64,
    pub point_a: [f64; 2],
    pub point_b: [f64; 2],
}

impl Separation {
    pub fn midpoint(&self) -> [f64; 2] {
        [
            (self.point_a[0] + self.point_b[0]) / 2.0,
            (self.point_a[1] + self.point_b[1]) / 2.0,
        ]
    }
}

fn project(p: &FootprintPolygon, axis: [f64; 2]) -> (f64, f64) {
    p.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        let d = v[0] * axis[0] + v[1] * axis[1];
        (lo.min(d), hi.max(d))
    })
}

/// Separating-axis test on the edge normals of both polygons; touching
/// counts as intersecting.
pub fn intersects(a: &FootprintPolygon, b: &FootprintPolygon) -> bool {
    a.edges().chain(b.edges()).all(|(p, q)| {
        let axis = [-(q[1] - p[1]), q[0] - p[0]];
        let (amin, amax) = project(a, axis);
        let (bmin, bmax) = project(b, axis);
        !(amax < bmin || bmax < amin)
    })
}

/// Closest point to `p` on segment `ab`.
fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    [a[0] + t * dx, a[1] + t * dy]
}

pub fn separation(a: &FootprintPolygon, b: &FootprintPolygon) -> Separation {
    if intersects(a, b) {
        let (ca, cb) = (a.centroid(), b.centroid());
        let m = [(ca[0] + cb[0]) / 2.0, (ca[1] + cb[1]) / 2.0];
        return Separation {
            distance: 0.0,
            point_a: m,
            point_b: m,
        };
    }
    let mut best = Separation {
        distance: f64::INFINITY,
        point_a: [0.0; 2],
        point_b: [0.0; 2],
    };
    for (from, to, a_is_vertex) in [(a, b, true), (b, a, false)] {
        for &v in &from.vertices {
            for (p, q) in to.edges() {
                let c = closest_on_segment(v, p, q);
                let d = (v[0] - c[0]).hypot(v[1] - c[1]);
                if d < best.distance {
                    best = if a_is_vertex {
                        Separation {
                            distance: d,
                            point_a: v,
                            point_b: c,
                        }
                    } else {
                        Separation {
                            distance: d,
                            point_a: c,
                            point_b: v,
                        }
                    };
                }
            }
        }
    }
    best
}

pub fn min_distance(a: &FootprintPolygon, b: &FootprintPolygon) -> f64 {
    separation(a, b).distance
}
