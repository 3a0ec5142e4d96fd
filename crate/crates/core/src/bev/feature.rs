use crate::error::{Error, Result};
use crate::geometry::BevGrid;
use crate::tensor::DenseTensor;

/// `H x W x C` feature map tied to a grid placement, an agent and a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFeature {
    pub grid: BevGrid,
    pub data: DenseTensor,
    pub agent_id: u32,
    pub timestamp: u32,
}

impl BevFeature {
    pub fn new(grid: BevGrid, data: DenseTensor, agent_id: u32, timestamp: u32) -> Result<Self> {
        if data.rank() != 3 || data.shape()[0] != grid.h || data.shape()[1] != grid.w {
            return Err(Error::shape("BevFeature", data.shape(), &[grid.h, grid.w, 0]));
        }
        if !data.all_finite() {
            return Err(Error::invalid("BEV feature contains non-finite values"));
        }
        Ok(Self {
            grid,
            data,
            agent_id,
            timestamp,
        })
    }

    pub fn zeros(grid: BevGrid, channels: usize, agent_id: u32, timestamp: u32) -> Self {
        Self {
            grid,
            data: DenseTensor::zeros([grid.h, grid.w, channels]),
            agent_id,
            timestamp,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let c = self.channels();
        let k = i * self.grid.w + j;
        &self.data.data()[k * c..(k + 1) * c]
    }

    /// The map viewed as `H*W` rows of `C` channels.
    pub fn as_rows(&self) -> DenseTensor {
        self.data
            .clone()
            .reshape([self.grid.cells(), self.channels()])
            .expect("cell count matches")
    }

    /// Per-cell L2 norm, row-major.
    pub fn cell_norms(&self) -> Vec<f64> {
        self.data
            .data()
            .chunks(self.channels())
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}
