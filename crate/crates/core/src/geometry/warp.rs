use super::{relative_transform, BevGrid, Pose2D};
use crate::bev::BevFeature;
use crate::error::{Error, Result};
use crate::tensor::{bilinear_sample_into, DenseTensor};

/// Sample coordinates this close to an integer are snapped onto it, so that
/// exact-cell motions reproduce cells bit for bit.
const SNAP: f64 = 1e-9;

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < SNAP {
        r
    } else {
        x
    }
}

/// Resamples a BEV map into the frame reached by `transform`, where
/// `transform` maps source-frame coordinates to target-frame coordinates
/// (see [`relative_transform`]). Each target cell center is pulled back into
/// the source grid and bilinearly sampled; cells that land outside read as
/// zero. Also returns the validity mask (`1` where the source was in range).
pub fn warp_bev_with_mask(feat: &BevFeature, transform: &Pose2D) -> (BevFeature, Vec<f64>) {
    let grid = feat.grid;
    let target = grid.with_origin(grid.origin.compose(&transform.inverse()));
    let inv = transform.inverse();
    let c = feat.channels();
    let mut out = DenseTensor::zeros([grid.h, grid.w, c]);
    let mut mask = vec![0.0; grid.cells()];
    for i in 0..grid.h {
        for j in 0..grid.w {
            let p = inv.transform_point(grid.cell_to_local([i as f64, j as f64]));
            let src = grid.local_to_cell(p);
            let (u, v) = (snap(src[0]), snap(src[1]));
            if !grid.contains_cell([u, v]) {
                continue;
            }
            let k = i * grid.w + j;
            mask[k] = 1.0;
            bilinear_sample_into(
                feat.data.data(),
                grid.h,
                grid.w,
                u,
                v,
                &mut out.data_mut()[k * c..(k + 1) * c],
            );
        }
    }
    let warped = BevFeature {
        grid: target,
        data: out,
        agent_id: feat.agent_id,
        timestamp: feat.timestamp,
    };
    (warped, mask)
}

pub fn warp_bev(feat: &BevFeature, transform: &Pose2D) -> BevFeature {
    warp_bev_with_mask(feat, transform).0
}

/// Warps `feat` into `target`'s frame. Both grids must share their shape and
/// resolution.
pub fn warp_bev_to(feat: &BevFeature, target: &BevGrid) -> Result<(BevFeature, Vec<f64>)> {
    if !feat.grid.same_geometry(target) {
        return Err(Error::GridMismatch(format!(
            "{}x{}@{} vs {}x{}@{}",
            feat.grid.h, feat.grid.w, feat.grid.resolution, target.h, target.w, target.resolution
        )));
    }
    let t = relative_transform(&feat.grid.origin, &target.origin);
    let (mut warped, mask) = warp_bev_with_mask(feat, &t);
    warped.grid = *target;
    Ok((warped, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn feature(h: usize, w: usize, c: usize, f: impl Fn(usize, usize, usize) -> f64) -> BevFeature {
        let grid = BevGrid::new(h, w, 1.0, Pose2D::new(3.0, -2.0, 0.3)).unwrap();
        let mut data = DenseTensor::zeros([h, w, c]);
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    data.set(&[i, j, k], f(i, j, k));
                }
            }
        }
        BevFeature::new(grid, data, 1, 0).unwrap()
    }

    #[test]
    fn identity_is_bit_exact() {
        let f = feature(9, 11, 3, |i, j, k| (i * 31 + j * 7 + k) as f64 * 0.37 - 4.0);
        let (w, mask) = warp_bev_with_mask(&f, &Pose2D::IDENTITY);
        assert_eq!(w.data, f.data);
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn one_cell_shift_along_x_moves_one_column() {
        let f = feature(6, 8, 2, |i, j, k| 1.0 + (i * 8 + j) as f64 + 0.5 * k as f64);
        let w = warp_bev(&f, &Pose2D::new(1.0, 0.0, 0.0));
        for i in 0..6 {
            for k in 0..2 {
                assert_eq!(w.data.get(&[i, 0, k]), 0.0);
                for j in 1..8 {
                    assert_eq!(w.data.get(&[i, j, k]), f.data.get(&[i, j - 1, k]));
                }
            }
        }
    }

    #[test]
    fn half_turn_reverses_indices() {
        let f = feature(7, 5, 2, |i, j, k| ((i + 2) * (j + 3)) as f64 - k as f64 * 1.5);
        let w = warp_bev(&f, &Pose2D::new(0.0, 0.0, PI));
        for i in 0..7 {
            for j in 0..5 {
                for k in 0..2 {
                    let expect = f.data.get(&[6 - i, 4 - j, k]);
                    assert!((w.data.get(&[i, j, k]) - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn mismatched_target_is_rejected() {
        let f = feature(6, 6, 1, |_, _, _| 1.0);
        let other = BevGrid::new(6, 7, 1.0, Pose2D::IDENTITY).unwrap();
        assert!(matches!(warp_bev_to(&f, &other), Err(Error::GridMismatch(_))));
    }
}
