//! Multi-head deformable cross-attention.
//!
//! Each query predicts, per head and per value map ("level"), a handful of
//! sampling offsets around its reference point. Keys and values are read at
//! those locations by bilinear sampling of the projected maps. A sample's
//! logit is the query/key dot product plus a logit predicted directly from
//! the query; logits are normalized with [`softmax_row_in_place`] over all
//! samples of a head, the weighted values are concatenated across heads and
//! projected back to `C` channels.

use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tensor::{bilinear_taps, softmax_row_backward, softmax_row_in_place, DenseTensor, RngSeed};

#[derive(Debug, Clone, PartialEq)]
pub struct DeformableAttnParams {
    pub channels: usize,
    pub heads: usize,
    pub levels: usize,
    pub points: usize,
    /// W^q
    pub query_proj: Linear,
    /// W^k, applied to every value-map cell
    pub key_proj: Linear,
    /// W^v, applied to every value-map cell
    pub value_proj: Linear,
    /// `C -> heads * levels * points * 2` sampling offsets, in map cells
    pub offset_net: Linear,
    /// `C -> heads * levels * points` logits added to the key scores
    pub weight_net: Linear,
    pub output_proj: Linear,
    /// softmax temperature, `1 / sqrt(C)`
    pub scale: f64,
}

impl DeformableAttnParams {
    fn check_dims(channels: usize, heads: usize, levels: usize, points: usize) -> Result<()> {
        if heads == 0 || points == 0 || levels == 0 {
            return Err(Error::invalid("heads, levels and sample points must be >= 1"));
        }
        if !channels.is_multiple_of(heads) {
            return Err(Error::invalid(format!(
                "{channels} channels not divisible into {heads} heads"
            )));
        }
        Ok(())
    }

    /// Random projections; offset biases start on rings of radius
    /// `0.5 * (p + 1)` cells in a per-head direction.
    pub fn seeded(
        channels: usize,
        heads: usize,
        levels: usize,
        points: usize,
        seed: RngSeed,
    ) -> Result<Self> {
        Self::check_dims(channels, heads, levels, points)?;
        let samples = heads * levels * points;
        let mut offset_net = Linear::seeded_scaled(channels, samples * 2, seed.derive("offset"), 0.1);
        let bias = offset_net.bias.data_mut();
        for h in 0..heads {
            let theta = 2.0 * PI * h as f64 / heads as f64 + PI / 4.0;
            for l in 0..levels {
                for p in 0..points {
                    let idx = (h * levels + l) * points + p;
                    let r = 0.5 * (p + 1) as f64;
                    bias[2 * idx] = r * theta.cos();
                    bias[2 * idx + 1] = r * theta.sin();
                }
            }
        }
        Ok(Self {
            channels,
            heads,
            levels,
            points,
            query_proj: Linear::seeded(channels, channels, seed.derive("query")),
            key_proj: Linear::seeded(channels, channels, seed.derive("key")),
            value_proj: Linear::seeded(channels, channels, seed.derive("value")),
            offset_net,
            weight_net: Linear::seeded(channels, samples, seed.derive("weight")),
            output_proj: Linear::seeded(channels, channels, seed.derive("output")),
            scale: 1.0 / (channels as f64).sqrt(),
        })
    }

    /// One head, one level, one sample point, zero offsets and identity
    /// value/output projections: the block reduces to plain bilinear
    /// sampling at the reference point.
    pub fn degenerate(channels: usize) -> Self {
        Self {
            channels,
            heads: 1,
            levels: 1,
            points: 1,
            query_proj: Linear::identity(channels),
            key_proj: Linear::identity(channels),
            value_proj: Linear::identity(channels),
            offset_net: Linear::zeros(channels, 2),
            weight_net: Linear::zeros(channels, 1),
            output_proj: Linear::identity(channels),
            scale: 1.0 / (channels as f64).sqrt(),
        }
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            query_proj: self.query_proj.zeros_like(),
            key_proj: self.key_proj.zeros_like(),
            value_proj: self.value_proj.zeros_like(),
            offset_net: self.offset_net.zeros_like(),
            weight_net: self.weight_net.zeros_like(),
            output_proj: self.output_proj.zeros_like(),
            ..*self
        }
    }

    fn samples_per_head(&self) -> usize {
        self.levels * self.points
    }

    fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn tensors(&self) -> Vec<&DenseTensor> {
        [
            &self.query_proj,
            &self.key_proj,
            &self.value_proj,
            &self.offset_net,
            &self.weight_net,
            &self.output_proj,
        ]
        .into_iter()
        .flat_map(|l| l.tensors())
        .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DenseTensor> {
        [
            &mut self.query_proj,
            &mut self.key_proj,
            &mut self.value_proj,
            &mut self.offset_net,
            &mut self.weight_net,
            &mut self.output_proj,
        ]
        .into_iter()
        .flat_map(|l| l.tensors_mut())
        .collect()
    }
}

/// Gradients of `sum(upstream * output)`.
#[derive(Debug, Clone)]
pub struct DeformableGrads {
    pub query: DenseTensor,
    pub value_maps: Vec<DenseTensor>,
    pub params: DeformableAttnParams,
}

/// Softmax weights and sample locations of every query, in
/// `[query][head][level][point]` order.
#[derive(Debug, Clone, Default)]
pub struct DeformableTrace {
    pub weights: Vec<f64>,
    pub locations: Vec<[f64; 2]>,
}

struct ProjectedMap {
    h: usize,
    w: usize,
    keys: Vec<f64>,
    values: Vec<f64>,
}

fn project_maps(maps: &[&DenseTensor], params: &DeformableAttnParams) -> Vec<ProjectedMap> {
    let c = params.channels;
    maps.iter()
        .map(|m| {
            let (h, w) = (m.shape()[0], m.shape()[1]);
            let mut keys = vec![0.0; h * w * c];
            let mut values = vec![0.0; h * w * c];
            for (cell, x) in m.data().chunks(c).enumerate() {
                params.key_proj.apply(x, &mut keys[cell * c..(cell + 1) * c]);
                params.value_proj.apply(x, &mut values[cell * c..(cell + 1) * c]);
            }
            ProjectedMap { h, w, keys, values }
        })
        .collect()
}

/// Bilinear read of channels `range` of a `h x w x c` grid.
fn sample_slice(grid: &[f64], h: usize, w: usize, c: usize, loc: [f64; 2], range: Range<usize>, out: &mut [f64]) {
    out.fill(0.0);
    if let Some(taps) = bilinear_taps(h, w, loc[0], loc[1]) {
        for (cell, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            let src = &grid[cell * c + range.start..cell * c + range.end];
            for (o, s) in out.iter_mut().zip(src) {
                *o += wt * s;
            }
        }
    }
}

fn splat_slice(grid: &mut [f64], h: usize, w: usize, c: usize, loc: [f64; 2], range: Range<usize>, g: &[f64]) {
    if let Some(taps) = bilinear_taps(h, w, loc[0], loc[1]) {
        for (cell, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            let dst = &mut grid[cell * c + range.start..cell * c + range.end];
            for (d, gv) in dst.iter_mut().zip(g) {
                *d += wt * gv;
            }
        }
    }
}

/// `d <g, sample_slice(loc)> / d loc`.
fn slice_point_grad(grid: &[f64], h: usize, w: usize, c: usize, loc: [f64; 2], range: Range<usize>, g: &[f64]) -> [f64; 2] {
    let Some(taps) = bilinear_taps(h, w, loc[0], loc[1]) else {
        return [0.0, 0.0];
    };
    let fu = loc[0] - loc[0].floor().min((h - 1) as f64);
    let fv = loc[1] - loc[1].floor().min((w - 1) as f64);
    let dotg = |cell: usize| -> f64 {
        grid[cell * c + range.start..cell * c + range.end]
            .iter()
            .zip(g)
            .map(|(a, b)| a * b)
            .sum()
    };
    let [(c00, _), (c01, _), (c10, _), (c11, _)] = taps;
    let (f00, f01, f10, f11) = (dotg(c00), dotg(c01), dotg(c10), dotg(c11));
    let du = if c10 == c00 { 0.0 } else { (1.0 - fv) * (f10 - f00) + fv * (f11 - f01) };
    let dv = if c01 == c00 { 0.0 } else { (1.0 - fu) * (f01 - f00) + fu * (f11 - f10) };
    [du, dv]
}

/// Per-query intermediate values kept for the backward pass.
struct QueryCache {
    q: Vec<f64>,
    locations: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// head-slice keys and values per sample, `samples x head_dim`
    keys: Vec<f64>,
    values: Vec<f64>,
    concat: Vec<f64>,
}

fn validate(
    query: &DenseTensor,
    value_maps: &[&DenseTensor],
    ref_points: &[[f64; 2]],
    params: &DeformableAttnParams,
) -> Result<()> {
    let c = params.channels;
    if query.rank() != 2 || query.shape()[1] != c {
        return Err(Error::shape("deformable_attention query", query.shape(), &[0, c]));
    }
    if value_maps.len() != params.levels {
        return Err(Error::shape(
            "deformable_attention levels",
            &[value_maps.len()],
            &[params.levels],
        ));
    }
    for m in value_maps {
        if m.rank() != 3 || m.shape()[2] != c {
            return Err(Error::shape("deformable_attention value map", m.shape(), &[0, 0, c]));
        }
    }
    if ref_points.len() != query.rows() * params.levels {
        return Err(Error::shape(
            "deformable_attention reference points",
            &[ref_points.len()],
            &[query.rows() * params.levels],
        ));
    }
    if ref_points.iter().any(|r| !r[0].is_finite() || !r[1].is_finite()) {
        return Err(Error::invalid("reference points must be finite"));
    }
    Ok(())
}

fn forward_query(
    x: &[f64],
    refs: &[[f64; 2]],
    maps: &[ProjectedMap],
    params: &DeformableAttnParams,
    out: &mut [f64],
) -> QueryCache {
    let c = params.channels;
    let dh = params.head_dim();
    let sph = params.samples_per_head();
    let q = params.query_proj.apply_vec(x);
    let off = params.offset_net.apply_vec(x);
    let extra = params.weight_net.apply_vec(x);
    let n = params.heads * sph;
    let mut cache = QueryCache {
        q,
        locations: Vec::with_capacity(n),
        weights: vec![0.0; n],
        keys: vec![0.0; n * dh],
        values: vec![0.0; n * dh],
        concat: vec![0.0; c],
    };
    for h in 0..params.heads {
        let range = h * dh..(h + 1) * dh;
        for l in 0..params.levels {
            let m = &maps[l];
            for p in 0..params.points {
                let idx = (h * params.levels + l) * params.points + p;
                let loc = [refs[l][0] + off[2 * idx], refs[l][1] + off[2 * idx + 1]];
                cache.locations.push(loc);
                let ks = &mut cache.keys[idx * dh..(idx + 1) * dh];
                sample_slice(&m.keys, m.h, m.w, c, loc, range.clone(), ks);
                let vs = &mut cache.values[idx * dh..(idx + 1) * dh];
                sample_slice(&m.values, m.h, m.w, c, loc, range.clone(), vs);
                let dot: f64 = cache.q[range.clone()].iter().zip(ks.iter()).map(|(a, b)| a * b).sum();
                cache.weights[idx] = extra[idx] + dot;
            }
        }
        let row = &mut cache.weights[h * sph..(h + 1) * sph];
        softmax_row_in_place(row, params.scale);
        for s in 0..sph {
            let idx = h * sph + s;
            let wt = cache.weights[idx];
            for (o, v) in cache.concat[range.clone()]
                .iter_mut()
                .zip(&cache.values[idx * dh..(idx + 1) * dh])
            {
                *o += wt * v;
            }
        }
    }
    params.output_proj.apply(&cache.concat, out);
    cache
}

/// `query: Nq x C`; `value_maps`: one `H_l x W_l x C` grid per level;
/// `ref_points`: `Nq * levels` reference coordinates `(row, col)` in each
/// map's cell units, query-major.
pub fn deformable_attention(
    query: &DenseTensor,
    value_maps: &[&DenseTensor],
    ref_points: &[[f64; 2]],
    params: &DeformableAttnParams,
) -> Result<DenseTensor> {
    Ok(deformable_attention_traced(query, value_maps, ref_points, params)?.0)
}

pub fn deformable_attention_traced(
    query: &DenseTensor,
    value_maps: &[&DenseTensor],
    ref_points: &[[f64; 2]],
    params: &DeformableAttnParams,
) -> Result<(DenseTensor, DeformableTrace)> {
    validate(query, value_maps, ref_points, params)?;
    let c = params.channels;
    let maps = project_maps(value_maps, params);
    let nq = query.rows();
    let mut out = DenseTensor::zeros([nq, c]);
    let mut trace = DeformableTrace::default();
    for qi in 0..nq {
        let refs = &ref_points[qi * params.levels..(qi + 1) * params.levels];
        let cache = forward_query(query.row(qi), refs, &maps, params, out.row_mut(qi));
        trace.weights.extend_from_slice(&cache.weights);
        trace.locations.extend_from_slice(&cache.locations);
    }
    Ok((out, trace))
}

/// Analytic gradients of `sum(upstream * deformable_attention(..))` with
/// respect to the queries, every value map and every parameter. Reference
/// points are treated as constants.
pub fn deformable_attention_backward(
    query: &DenseTensor,
    value_maps: &[&DenseTensor],
    ref_points: &[[f64; 2]],
    params: &DeformableAttnParams,
    upstream: &DenseTensor,
) -> Result<DeformableGrads> {
    validate(query, value_maps, ref_points, params)?;
    if upstream.shape() != query.shape() {
        return Err(Error::shape("deformable_attention upstream", upstream.shape(), query.shape()));
    }
    let c = params.channels;
    let dh = params.head_dim();
    let sph = params.samples_per_head();
    let maps = project_maps(value_maps, params);
    let mut gp = params.zeros_like();
    let mut dquery = DenseTensor::zeros(query.shape().to_vec());
    let mut dkeys: Vec<Vec<f64>> = maps.iter().map(|m| vec![0.0; m.keys.len()]).collect();
    let mut dvals: Vec<Vec<f64>> = maps.iter().map(|m| vec![0.0; m.values.len()]).collect();
    let mut scratch = vec![0.0; c];

    for qi in 0..query.rows() {
        let x = query.row(qi);
        let refs = &ref_points[qi * params.levels..(qi + 1) * params.levels];
        let cache = forward_query(x, refs, &maps, params, &mut scratch);
        let dy = upstream.row(qi);

        gp.output_proj.accumulate_grad(&cache.concat, dy);
        let mut dconcat = vec![0.0; c];
        params.output_proj.backprop_input(dy, &mut dconcat);

        let n = params.heads * sph;
        let mut dq = vec![0.0; c];
        let mut doff = vec![0.0; 2 * n];
        let mut dextra = vec![0.0; n];
        for h in 0..params.heads {
            let range = h * dh..(h + 1) * dh;
            let dout_h = &dconcat[range.clone()];
            let a = &cache.weights[h * sph..(h + 1) * sph];
            let da: Vec<f64> = (0..sph)
                .map(|s| {
                    let idx = h * sph + s;
                    dout_h
                        .iter()
                        .zip(&cache.values[idx * dh..(idx + 1) * dh])
                        .map(|(g, v)| g * v)
                        .sum()
                })
                .collect();
            let mut dz = vec![0.0; sph];
            softmax_row_backward(a, &da, params.scale, &mut dz);
            for s in 0..sph {
                let idx = h * sph + s;
                let l = s / params.points;
                let m = &maps[l];
                let loc = cache.locations[idx];
                dextra[idx] = dz[s];
                let k = &cache.keys[idx * dh..(idx + 1) * dh];
                for (d, kv) in dq[range.clone()].iter_mut().zip(k) {
                    *d += dz[s] * kv;
                }
                let dk: Vec<f64> = cache.q[range.clone()].iter().map(|qv| dz[s] * qv).collect();
                let dv: Vec<f64> = dout_h.iter().map(|g| a[s] * g).collect();
                splat_slice(&mut dkeys[l], m.h, m.w, c, loc, range.clone(), &dk);
                splat_slice(&mut dvals[l], m.h, m.w, c, loc, range.clone(), &dv);
                let gk = slice_point_grad(&m.keys, m.h, m.w, c, loc, range.clone(), &dk);
                let gv = slice_point_grad(&m.values, m.h, m.w, c, loc, range.clone(), &dv);
                doff[2 * idx] = gk[0] + gv[0];
                doff[2 * idx + 1] = gk[1] + gv[1];
            }
        }

        let dx = dquery.row_mut(qi);
        params.query_proj.backprop_input(&dq, dx);
        params.offset_net.backprop_input(&doff, dx);
        params.weight_net.backprop_input(&dextra, dx);
        gp.query_proj.accumulate_grad(x, &dq);
        gp.offset_net.accumulate_grad(x, &doff);
        gp.weight_net.accumulate_grad(x, &dextra);
    }

    let mut dmaps = Vec::with_capacity(value_maps.len());
    for (l, m) in value_maps.iter().enumerate() {
        let mut dm = DenseTensor::zeros(m.shape().to_vec());
        for (cell, x) in m.data().chunks(c).enumerate() {
            let gk = &dkeys[l][cell * c..(cell + 1) * c];
            let gv = &dvals[l][cell * c..(cell + 1) * c];
            let dx = dm.row_mut_flat(cell, c);
            params.key_proj.backprop_input(gk, dx);
            params.value_proj.backprop_input(gv, dx);
            gp.key_proj.accumulate_grad(x, gk);
            gp.value_proj.accumulate_grad(x, gv);
        }
        dmaps.push(dm);
    }

    Ok(DeformableGrads {
        query: dquery,
        value_maps: dmaps,
        params: gp,
    })
}

impl DenseTensor {
    pub(crate) fn row_mut_flat(&mut self, k: usize, c: usize) -> &mut [f64] {
        &mut self.data_mut()[k * c..(k + 1) * c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{bilinear_sample, seeded_init, InitScheme};

    fn map(h: usize, w: usize, c: usize, seed: u64) -> DenseTensor {
        seeded_init(&[h, w, c], RngSeed(seed), InitScheme::Uniform(1.0)).unwrap()
    }

    #[test]
    fn degenerate_block_is_plain_sampling() {
        let c = 4;
        let v = map(5, 6, c, 11);
        let q = seeded_init(&[3, c], RngSeed(2), InitScheme::Uniform(1.0)).unwrap();
        let refs = [[1.25, 2.5], [0.0, 0.0], [3.9, 4.1]];
        let out = deformable_attention(&q, &[&v], &refs, &DeformableAttnParams::degenerate(c)).unwrap();
        let expect = bilinear_sample(&v, &refs).unwrap();
        for (a, b) in out.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_normalize_per_head() {
        let c = 8;
        let p = DeformableAttnParams::seeded(c, 2, 2, 3, RngSeed(5)).unwrap();
        let q = seeded_init(&[4, c], RngSeed(9), InitScheme::Uniform(1.0)).unwrap();
        let (a, b) = (map(6, 6, c, 1), map(3, 4, c, 2));
        let refs: Vec<[f64; 2]> = (0..8).map(|k| [k as f64 * 0.3, 1.0 + k as f64 * 0.2]).collect();
        let (_, trace) = deformable_attention_traced(&q, &[&a, &b], &refs, &p).unwrap();
        for row in trace.weights.chunks(6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn single_cell_map_reads_projected_value() {
        let c = 4;
        let mut p = DeformableAttnParams::seeded(c, 2, 1, 3, RngSeed(4)).unwrap();
        p.offset_net = Linear::zeros(c, p.offset_net.dout());
        let v = map(1, 1, c, 3);
        let q = seeded_init(&[2, c], RngSeed(6), InitScheme::Uniform(1.0)).unwrap();
        let out = deformable_attention(&q, &[&v], &[[0.0, 0.0], [0.0, 0.0]], &p).unwrap();
        let expect = p.output_proj.apply_vec(&p.value_proj.apply_vec(v.data()));
        for r in 0..2 {
            for (a, b) in out.row(r).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let p = DeformableAttnParams::degenerate(4);
        let q = DenseTensor::zeros([2, 3]);
        let v = map(2, 2, 4, 0);
        assert!(deformable_attention(&q, &[&v], &[[0.0, 0.0]; 2], &p).is_err());
        let q = DenseTensor::zeros([2, 4]);
        assert!(deformable_attention(&q, &[&v], &[[0.0, 0.0]; 1], &p).is_err());
        assert!(DeformableAttnParams::seeded(6, 4, 1, 1, RngSeed(0)).is_err());
    }
}
