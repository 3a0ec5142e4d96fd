use super::{probe, DenseTensor};
use crate::error::{Error, Result};

/// Standard matrix product. Each output entry accumulates over the inner
/// index in ascending order, so results do not depend on scheduling.
pub fn matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = DenseTensor::zeros([m, n]);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for i in 0..m {
        let orow = &mut od[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Row-wise affine map `x W + b` with `W: din x dout`.
pub fn linear_forward(
    x: &DenseTensor,
    weights: &DenseTensor,
    bias: &DenseTensor,
) -> Result<DenseTensor> {
    if bias.rank() != 1 || weights.rank() != 2 || bias.shape()[0] != weights.shape()[1] {
        return Err(Error::shape("linear_forward", weights.shape(), bias.shape()));
    }
    let mut out = matmul(x, weights)?;
    let n = bias.len();
    for row in out.data_mut().chunks_mut(n) {
        for (o, b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

/// In-place softmax of `scale * row`. The row maximum is subtracted first so
/// large inputs cannot overflow.
pub fn softmax_row_in_place(row: &mut [f64], scale: f64) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) * scale).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
    probe::record(row);
}

/// Softmax over the last axis of `scale * x` for every row of a matrix.
pub fn scaled_softmax_rows(x: &DenseTensor, scale: f64) -> Result<DenseTensor> {
    if x.rank() != 2 || x.shape()[1] == 0 {
        return Err(Error::shape("scaled_softmax_rows", x.shape(), &[2]));
    }
    if !(scale > 0.0) {
        return Err(Error::invalid(format!("softmax scale must be > 0, got {scale}")));
    }
    let mut out = x.clone();
    let c = x.shape()[1];
    for row in out.data_mut().chunks_mut(c) {
        softmax_row_in_place(row, scale);
    }
    Ok(out)
}

/// The (up to) four grid cells and weights of a bilinear read at `(u, v)`,
/// where `u` runs along the `h` axis and `v` along `w`. Points outside
/// `[0, h-1] x [0, w-1]` (or non-finite) have no taps and read as zero.
pub fn bilinear_taps(h: usize, w: usize, u: f64, v: f64) -> Option<[(usize, f64); 4]> {
    if !(u >= 0.0 && v >= 0.0 && u <= (h - 1) as f64 && v <= (w - 1) as f64) {
        return None;
    }
    let u0 = (u.floor() as usize).min(h - 1);
    let v0 = (v.floor() as usize).min(w - 1);
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let u1 = (u0 + 1).min(h - 1);
    let v1 = (v0 + 1).min(w - 1);
    Some([
        (u0 * w + v0, (1.0 - fu) * (1.0 - fv)),
        (u0 * w + v1, (1.0 - fu) * fv),
        (u1 * w + v0, fu * (1.0 - fv)),
        (u1 * w + v1, fu * fv),
    ])
}

/// Writes the bilinear read of an `h x w x c` grid (given as a flat slice)
/// at `(u, v)` into `out`.
pub fn bilinear_sample_into(grid: &[f64], h: usize, w: usize, u: f64, v: f64, out: &mut [f64]) {
    let c = out.len();
    out.fill(0.0);
    if let Some(taps) = bilinear_taps(h, w, u, v) {
        for (cell, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            let src = &grid[cell * c..(cell + 1) * c];
            for (o, s) in out.iter_mut().zip(src) {
                *o += wt * s;
            }
        }
    }
}

/// Adjoint of [`bilinear_sample_into`]: accumulates `grad` into the grid
/// cells that the read at `(u, v)` touched.
pub fn bilinear_splat(grid_grad: &mut [f64], h: usize, w: usize, u: f64, v: f64, grad: &[f64]) {
    let c = grad.len();
    if let Some(taps) = bilinear_taps(h, w, u, v) {
        for (cell, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            let dst = &mut grid_grad[cell * c..(cell + 1) * c];
            for (d, g) in dst.iter_mut().zip(grad) {
                *d += wt * g;
            }
        }
    }
}

/// Samples an `H x W x C` grid at continuous `(u, v)` coordinates.
pub fn bilinear_sample(feat: &DenseTensor, points: &[[f64; 2]]) -> Result<DenseTensor> {
    if feat.rank() != 3 {
        return Err(Error::shape("bilinear_sample", feat.shape(), &[3]));
    }
    let (h, w, c) = (feat.shape()[0], feat.shape()[1], feat.shape()[2]);
    let mut out = DenseTensor::zeros([points.len(), c]);
    for (p, row) in points.iter().zip(out.data_mut().chunks_mut(c.max(1))) {
        bilinear_sample_into(feat.data(), h, w, p[0], p[1], row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseTensor {
        DenseTensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_expansion() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&DenseTensor::identity(2), &a).unwrap(), a);
        let col = m(&[&[0.0], &[1.0]]);
        assert_eq!(matmul(&a, &col).unwrap(), m(&[&[2.0], &[4.0]]));
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = DenseTensor::zeros([3, 3]);
        let b = DenseTensor::new([3, 3], (0..9).map(|v| v as f64 - 4.0).collect()).unwrap();
        assert_eq!(matmul(&z, &b).unwrap(), DenseTensor::zeros([3, 3]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = DenseTensor::zeros([2, 3]);
        let b = DenseTensor::zeros([2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let u = scaled_softmax_rows(&m(&[&[0.0, 0.0, 0.0]]), 1.0).unwrap();
        for &v in u.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let single = scaled_softmax_rows(&m(&[&[123.0]]), 7.0).unwrap();
        assert_eq!(single.data(), &[1.0]);
        let s = scaled_softmax_rows(&m(&[&[0.0, 2f64.ln()]]), 1.0).unwrap();
        assert!((s.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_scale() {
        assert!(scaled_softmax_rows(&m(&[&[1.0]]), 0.0).is_err());
    }

    #[test]
    fn linear_examples() {
        let x = m(&[&[1.0, 1.0]]);
        let w = DenseTensor::identity(2);
        let b = DenseTensor::vector(vec![1.0, 2.0]);
        assert_eq!(linear_forward(&x, &w, &b).unwrap(), m(&[&[2.0, 3.0]]));
        let zero = linear_forward(&x, &DenseTensor::zeros([2, 2]), &DenseTensor::zeros([2])).unwrap();
        assert_eq!(zero, DenseTensor::zeros([1, 2]));
        let eye = DenseTensor::identity(3);
        assert_eq!(linear_forward(&eye, &eye, &DenseTensor::zeros([3])).unwrap(), eye);
    }

    #[test]
    fn bilinear_on_grid_midpoint_and_outside() {
        let feat = DenseTensor::new([4, 5, 2], (0..40).map(|v| v as f64 * 0.5).collect()).unwrap();
        let s = bilinear_sample(&feat, &[[2.0, 3.0], [-5.0, -5.0], [0.5, 0.5]]).unwrap();
        assert_eq!(s.row(0), &feat.data()[(2 * 5 + 3) * 2..(2 * 5 + 3) * 2 + 2]);
        assert_eq!(s.row(1), &[0.0, 0.0]);
        for ch in 0..2 {
            let corners = [feat.get(&[0, 0, ch]), feat.get(&[0, 1, ch]), feat.get(&[1, 0, ch]), feat.get(&[1, 1, ch])];
            let mean = corners.iter().sum::<f64>() / 4.0;
            assert!((s.row(2)[ch] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_far_edge_is_inside() {
        let feat = DenseTensor::new([3, 3, 1], (0..9).map(|v| v as f64).collect()).unwrap();
        let s = bilinear_sample(&feat, &[[2.0, 2.0], [2.0 + 1e-9, 2.0]]).unwrap();
        assert_eq!(s.data(), &[8.0, 0.0]);
    }
}
