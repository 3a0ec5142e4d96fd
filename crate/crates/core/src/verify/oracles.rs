//! Slow, obviously-correct reference implementations.

use crate::accident::{footprint, separation, AgentPath, CollisionEvent};
use crate::bev::{BevFeature, DeformableAttnParams};
use crate::error::Result;
use crate::geometry::OrientedBox;
use crate::tensor::{matmul, scaled_softmax_rows, DenseTensor};

/// Best partial matching by exhaustive search: most pairs with cost at most
/// `gate`, then the smallest total cost. Returns `(pairs, total cost)`.
pub fn exhaustive_assignment(cost: &[Vec<f64>], gate: f64) -> (usize, f64) {
    fn go(cost: &[Vec<f64>], gate: f64, row: usize, used: &mut Vec<bool>, n: usize, c: f64, best: &mut (usize, f64)) {
        if row == cost.len() {
            if n > best.0 || (n == best.0 && c < best.1) {
                *best = (n, c);
            }
            return;
        }
        go(cost, gate, row + 1, used, n, c, best);
        for j in 0..used.len() {
            if !used[j] && cost[row][j] <= gate {
                used[j] = true;
                go(cost, gate, row + 1, used, n + 1, c + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let cols = cost.first().map_or(0, Vec::len);
    let mut best = (0, 0.0);
    go(cost, gate, 0, &mut vec![false; cols], 0, 0.0, &mut best);
    best
}

/// Every pair at every frame: the first frame each pair is closer than
/// `threshold` gives its event.
pub fn brute_force_collisions(paths: &[AgentPath], threshold: f64, t0: u32) -> Result<Vec<CollisionEvent>> {
    let mut events = Vec::new();
    for a in 0..paths.len() {
        for b in 0..paths.len() {
            if paths[a].id >= paths[b].id {
                continue;
            }
            for (t, (ba, bb)) in paths[a].boxes.iter().zip(&paths[b].boxes).enumerate() {
                let s = separation(&footprint(ba)?, &footprint(bb)?);
                if s.distance < threshold {
                    events.push(CollisionEvent {
                        timestamp: t0 + t as u32,
                        id_a: paths[a].id,
                        id_b: paths[b].id,
                        position: s.midpoint(),
                        min_distance: s.distance,
                    });
                    break;
                }
            }
        }
    }
    events.sort_by_key(|e| (e.timestamp, e.id_a, e.id_b));
    Ok(events)
}

/// Distance from a point to a box, zero inside.
pub fn point_box_distance(p: [f64; 2], b: &OrientedBox) -> f64 {
    let [x, y] = b.pose().inverse_transform_point(p);
    let dx = (x.abs() - b.length / 2.0).max(0.0);
    let dy = (y.abs() - b.width / 2.0).max(0.0);
    dx.hypot(dy)
}

fn boundary_points(b: &OrientedBox, spacing: f64) -> Vec<[f64; 2]> {
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    let corners = [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]];
    let pose = b.pose();
    let mut pts = Vec::new();
    for k in 0..4 {
        let (p, q) = (corners[k], corners[(k + 1) % 4]);
        let n = ((q[0] - p[0]).hypot(q[1] - p[1]) / spacing).ceil().max(1.0) as usize;
        for s in 0..n {
            let t = s as f64 / n as f64;
            pts.push(pose.transform_point([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]));
        }
    }
    pts
}

/// Minimum distance between two boxes from points sampled along both
/// boundaries at `spacing`. Over-estimates the true distance by at most
/// `spacing / 2`.
pub fn sampled_min_distance(a: &OrientedBox, b: &OrientedBox, spacing: f64) -> f64 {
    let ab = boundary_points(a, spacing).into_iter().map(|p| point_box_distance(p, b));
    let ba = boundary_points(b, spacing).into_iter().map(|p| point_box_distance(p, a));
    ab.chain(ba).fold(f64::INFINITY, f64::min)
}

/// Cells of `bev` whose centers fall inside `b` (world frame).
pub fn cells_inside(bev: &BevFeature, b: &OrientedBox) -> Vec<usize> {
    let g = &bev.grid;
    (0..g.cells())
        .filter(|&k| point_box_distance(g.cell_to_world([(k / g.w) as f64, (k % g.w) as f64]), b) == 0.0)
        .collect()
}

/// L2 norm of `a - b` over the given cells.
pub fn energy_difference(a: &BevFeature, b: &BevFeature, cells: &[usize]) -> f64 {
    let c = a.channels();
    cells
        .iter()
        .flat_map(|&k| {
            a.data.data()[k * c..(k + 1) * c]
                .iter()
                .zip(&b.data.data()[k * c..(k + 1) * c])
                .map(|(x, y)| (x - y) * (x - y))
        })
        .sum::<f64>()
        .sqrt()
}

/// Deformable attention written densely: every sample is a row of tent
/// weights over all cells of its map, multiplied against the fully projected
/// keys and values. Only practical on tiny maps.
pub fn dense_deformable_attention(
    query: &DenseTensor,
    value_maps: &[&DenseTensor],
    ref_points: &[[f64; 2]],
    params: &DeformableAttnParams,
) -> Result<DenseTensor> {
    let c = params.channels;
    let dh = c / params.heads;
    let (levels, points) = (params.levels, params.points);
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for m in value_maps {
        let flat = (*m).clone().reshape([m.shape()[0] * m.shape()[1], c])?;
        keys.push(params.key_proj.forward(&flat)?);
        values.push(params.value_proj.forward(&flat)?);
    }
    let q = params.query_proj.forward(query)?;
    let off = params.offset_net.forward(query)?;
    let extra = params.weight_net.forward(query)?;
    let tent = |d: f64| (1.0 - d.abs()).max(0.0);
    let mut concat = DenseTensor::zeros([query.rows(), c]);
    for qi in 0..query.rows() {
        for head in 0..params.heads {
            let cols = head * dh..(head + 1) * dh;
            let mut logits = Vec::new();
            let mut sampled = Vec::new();
            for l in 0..levels {
                let (h, w) = (value_maps[l].shape()[0], value_maps[l].shape()[1]);
                for p in 0..points {
                    let idx = (head * levels + l) * points + p;
                    let r = ref_points[qi * levels + l];
                    let (u, v) = (r[0] + off.get(&[qi, 2 * idx]), r[1] + off.get(&[qi, 2 * idx + 1]));
                    let inside = u >= 0.0 && v >= 0.0 && u <= (h - 1) as f64 && v <= (w - 1) as f64;
                    let kernel: Vec<f64> = (0..h * w)
                        .map(|k| if inside { tent(u - (k / w) as f64) * tent(v - (k % w) as f64) } else { 0.0 })
                        .collect();
                    let kernel = DenseTensor::new([1, h * w], kernel)?;
                    let k = matmul(&kernel, &keys[l])?;
                    let val = matmul(&kernel, &values[l])?;
                    let dot: f64 = cols.clone().map(|j| q.get(&[qi, j]) * k.get(&[0, j])).sum();
                    logits.push(extra.get(&[qi, idx]) + dot);
                    sampled.push(val);
                }
            }
            let n = logits.len();
            let weights = scaled_softmax_rows(&DenseTensor::new([1, n], logits)?, params.scale)?;
            for (s, val) in sampled.iter().enumerate() {
                for j in cols.clone() {
                    let acc = concat.get(&[qi, j]) + weights.get(&[0, s]) * val.get(&[0, j]);
                    concat.set(&[qi, j], acc);
                }
            }
        }
    }
    params.output_proj.forward(&concat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustive_prefers_cardinality_then_cost() {
        // (0,0) alone costs 0.1 but blocks row 1; two pairs cost 1.5.
        let cost = vec![vec![0.1, 1.0], vec![0.5, 9.0]];
        assert_eq!(exhaustive_assignment(&cost, 2.0), (2, 1.5));
        assert_eq!(exhaustive_assignment(&cost, 0.3), (1, 0.1));
        assert_eq!(exhaustive_assignment(&[vec![3.0]], 2.0), (0, 0.0));
    }

    #[test]
    fn point_distance_closed_form() {
        let b = OrientedBox::new(0.0, 0.0, 2.0, 2.0, 0.0);
        assert_eq!(point_box_distance([0.5, 0.5], &b), 0.0);
        assert_eq!(point_box_distance([3.0, 0.0], &b), 2.0);
        assert!((point_box_distance([4.0, 5.0], &b) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_distance_of_separated_squares() {
        let a = OrientedBox::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = OrientedBox::new(3.0, 0.0, 1.0, 1.0, 0.0);
        assert!((sampled_min_distance(&a, &b, 1e-3) - 2.0).abs() < 1e-9);
    }
}
