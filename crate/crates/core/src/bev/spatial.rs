use super::deformable::{deformable_attention, DeformableAttnParams};
use super::MultiViewFeatures;
use crate::error::{Error, Result};
use crate::geometry::{project_pillar, BevGrid, CameraRig};
use crate::tensor::DenseTensor;

/// BEV cells seen by one camera and where their pillars land on that
/// camera's feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewVisibility {
    /// flat cell indices `i * W + j`, ascending
    pub cells: Vec<usize>,
    /// reference points `(row, col)` on the feature map, one per cell
    pub refs: Vec<[f64; 2]>,
}

/// A cell is visible in a view when at least one of its pillar points
/// projects inside the image. The reference point is the mean pixel of the
/// visible pillar points, converted to feature-map cell units and clamped
/// onto the map.
pub fn pillar_visibility(
    grid: &BevGrid,
    rig: &CameraRig,
    heights: &[f64],
    feature_size: (usize, usize),
    stride: usize,
) -> Vec<ViewVisibility> {
    let (hf, wf) = feature_size;
    let s = stride as f64;
    (0..rig.len())
        .map(|view| {
            let mut vis = ViewVisibility {
                cells: Vec::new(),
                refs: Vec::new(),
            };
            for i in 0..grid.h {
                for j in 0..grid.w {
                    let hits = project_pillar(grid, (i, j), heights, rig, view);
                    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
                    for hit in hits.iter().filter(|h| h.visible) {
                        su += hit.u;
                        sv += hit.v;
                        n += 1;
                    }
                    if n == 0 {
                        continue;
                    }
                    let (u, v) = (su / n as f64, sv / n as f64);
                    let row = (v / s - 0.5).clamp(0.0, (hf - 1) as f64);
                    let col = (u / s - 0.5).clamp(0.0, (wf - 1) as f64);
                    vis.cells.push(i * grid.w + j);
                    vis.refs.push([row, col]);
                }
            }
            vis
        })
        .collect()
}

/// One round of spatial cross-attention with precomputed visibility.
/// Returns `query + mean over seeing views of the attended update`; rows of
/// cells no camera sees are returned unchanged.
pub fn spatial_cross_attention_with(
    bev_query: &DenseTensor,
    feats: &MultiViewFeatures,
    visibility: &[ViewVisibility],
    params: &DeformableAttnParams,
) -> Result<DenseTensor> {
    if visibility.len() != feats.maps.len() {
        return Err(Error::ViewCount {
            expected: visibility.len(),
            got: feats.maps.len(),
        });
    }
    let c = params.channels;
    let cells = bev_query.rows();
    let mut update = DenseTensor::zeros([cells, c]);
    let mut count = vec![0u32; cells];
    for (vis, map) in visibility.iter().zip(&feats.maps) {
        if vis.cells.is_empty() {
            continue;
        }
        let mut q = DenseTensor::zeros([vis.cells.len(), c]);
        for (r, &cell) in vis.cells.iter().enumerate() {
            q.row_mut(r).copy_from_slice(bev_query.row(cell));
        }
        let out = deformable_attention(&q, &[map], &vis.refs, params)?;
        for (r, &cell) in vis.cells.iter().enumerate() {
            count[cell] += 1;
            for (u, o) in update.row_mut(cell).iter_mut().zip(out.row(r)) {
                *u += o;
            }
        }
    }
    let mut out = bev_query.clone();
    for (cell, &n) in count.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let inv = 1.0 / n as f64;
        let upd = update.row(cell).to_vec();
        for (o, u) in out.row_mut(cell).iter_mut().zip(upd) {
            *o += u * inv;
        }
    }
    Ok(out)
}

pub fn spatial_cross_attention(
    bev_query: &DenseTensor,
    feats: &MultiViewFeatures,
    rig: &CameraRig,
    grid: &BevGrid,
    pillar_heights: &[f64],
    params: &DeformableAttnParams,
) -> Result<DenseTensor> {
    let size = feats
        .maps
        .first()
        .map(|m| (m.shape()[0], m.shape()[1]))
        .ok_or_else(|| Error::invalid("no feature maps"))?;
    let vis = pillar_visibility(grid, rig, pillar_heights, size, feats.stride);
    spatial_cross_attention_with(bev_query, feats, &vis, params)
}
