use crate::bev::{deformable_attention, deformable_attention_backward, BevFeature, DeformableAttnParams};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tensor::{DenseTensor, RngSeed};

/// Residual fusion of a BEV map with a second, already aligned BEV map.
///
/// Every cell of the query map attends to the value map with its own cell as
/// reference point. The attended vector `u` enters the output through a
/// per-channel gate `tanh(G u + b)` and the validity mask:
/// `out = x + m * gate(u) * u`. Cells with `m = 0` are copied unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionBlock {
    pub attn: DeformableAttnParams,
    pub gate: Linear,
    /// replaces the learned gate by a constant 1
    pub gate_open: bool,
}

#[derive(Debug, Clone)]
pub struct FusionGrads {
    /// `H x W x C`
    pub query: DenseTensor,
    pub value: DenseTensor,
    pub attn: DeformableAttnParams,
    pub gate: Linear,
}

fn check_maps(query: &DenseTensor, value: &DenseTensor, mask: Option<&[f64]>) -> Result<()> {
    if query.rank() != 3 || query.shape() != value.shape() {
        return Err(Error::shape("fusion maps", query.shape(), value.shape()));
    }
    if let Some(m) = mask {
        if m.len() != query.shape()[0] * query.shape()[1] {
            return Err(Error::shape("fusion mask", &[m.len()], &query.shape()[..2]));
        }
    }
    Ok(())
}

impl FusionBlock {
    /// Random attention, zero gate: the block starts as the identity.
    pub fn seeded(channels: usize, heads: usize, points: usize, seed: RngSeed) -> Result<Self> {
        Ok(Self {
            attn: DeformableAttnParams::seeded(channels, heads, 1, points, seed.derive("attn"))?,
            gate: Linear::zeros(channels, channels),
            gate_open: false,
        })
    }

    pub fn channels(&self) -> usize {
        self.attn.channels
    }

    /// Flat indices of the cells that take part, and their reference points.
    fn active(&self, h: usize, w: usize, mask: Option<&[f64]>) -> (Vec<usize>, Vec<[f64; 2]>) {
        let cells: Vec<usize> = (0..h * w).filter(|&k| mask.is_none_or(|m| m[k] != 0.0)).collect();
        let refs = cells.iter().map(|&k| [(k / w) as f64, (k % w) as f64]).collect();
        (cells, refs)
    }

    fn gate_values(&self, u: &[f64]) -> Vec<f64> {
        if self.gate_open {
            vec![1.0; u.len()]
        } else {
            self.gate.apply_vec(u).into_iter().map(f64::tanh).collect()
        }
    }

    /// Raw fused map for `query` (`H x W x C`) against `value` on the same grid.
    pub fn forward(&self, query: &DenseTensor, value: &DenseTensor, mask: Option<&[f64]>) -> Result<DenseTensor> {
        check_maps(query, value, mask)?;
        let (h, w, c) = (query.shape()[0], query.shape()[1], query.shape()[2]);
        let (cells, refs) = self.active(h, w, mask);
        let mut out = query.clone();
        if cells.is_empty() {
            return Ok(out);
        }
        let mut q = DenseTensor::zeros([cells.len(), c]);
        for (r, &k) in cells.iter().enumerate() {
            q.row_mut(r).copy_from_slice(&query.data()[k * c..(k + 1) * c]);
        }
        let u = deformable_attention(&q, &[value], &refs, &self.attn)?;
        for (r, &k) in cells.iter().enumerate() {
            let m = mask.map_or(1.0, |m| m[k]);
            let ur = u.row(r);
            let g = self.gate_values(ur);
            for ((o, uv), gv) in out.row_mut_flat(k, c).iter_mut().zip(ur).zip(&g) {
                *o += m * gv * uv;
            }
        }
        Ok(out)
    }

    /// Fuses `value` into `query`; the result keeps the query's grid, agent
    /// and timestamp.
    pub fn apply(&self, query: &BevFeature, value: &DenseTensor, mask: Option<&[f64]>) -> Result<BevFeature> {
        let data = self.forward(&query.data, value, mask)?;
        BevFeature::new(query.grid, data, query.agent_id, query.timestamp)
    }

    /// Gradients of `sum(upstream * forward(query, value, mask))`.
    pub fn backward(
        &self,
        query: &DenseTensor,
        value: &DenseTensor,
        mask: Option<&[f64]>,
        upstream: &DenseTensor,
    ) -> Result<FusionGrads> {
        check_maps(query, value, mask)?;
        if upstream.shape() != query.shape() {
            return Err(Error::shape("fusion upstream", upstream.shape(), query.shape()));
        }
        let (h, w, c) = (query.shape()[0], query.shape()[1], query.shape()[2]);
        let (cells, refs) = self.active(h, w, mask);
        let mut dquery = upstream.clone();
        let mut gate_grad = self.gate.zeros_like();
        if cells.is_empty() {
            return Ok(FusionGrads {
                query: dquery,
                value: DenseTensor::zeros(value.shape().to_vec()),
                attn: self.attn.zeros_like(),
                gate: gate_grad,
            });
        }
        let mut q = DenseTensor::zeros([cells.len(), c]);
        for (r, &k) in cells.iter().enumerate() {
            q.row_mut(r).copy_from_slice(&query.data()[k * c..(k + 1) * c]);
        }
        let u = deformable_attention(&q, &[value], &refs, &self.attn)?;
        let mut du = DenseTensor::zeros([cells.len(), c]);
        for (r, &k) in cells.iter().enumerate() {
            let m = mask.map_or(1.0, |m| m[k]);
            let ur = u.row(r);
            let dy = &upstream.data()[k * c..(k + 1) * c];
            let g = self.gate_values(ur);
            let dur = du.row_mut(r);
            for ((d, gv), y) in dur.iter_mut().zip(&g).zip(dy) {
                *d = m * gv * y;
            }
            if !self.gate_open {
                let dz: Vec<f64> = (0..c).map(|i| m * dy[i] * ur[i] * (1.0 - g[i] * g[i])).collect();
                self.gate.backprop_input(&dz, dur);
                gate_grad.accumulate_grad(ur, &dz);
            }
        }
        let ag = deformable_attention_backward(&q, &[value], &refs, &self.attn, &du)?;
        for (r, &k) in cells.iter().enumerate() {
            for (d, g) in dquery.row_mut_flat(k, c).iter_mut().zip(ag.query.row(r)) {
                *d += g;
            }
        }
        let mut vg = ag.value_maps;
        Ok(FusionGrads {
            query: dquery,
            value: vg.remove(0),
            attn: ag.params,
            gate: gate_grad,
        })
    }
}
