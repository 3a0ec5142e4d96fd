use std::str::FromStr;

use super::ops::{bilinear_splat, bilinear_taps, matmul, scaled_softmax_rows};
use super::DenseTensor;
use crate::error::{Error, Result};

/// Primitives that have an analytic backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    Matmul,
    ScaledSoftmaxRows,
    BilinearSample,
    LinearForward,
}

impl FromStr for OpTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matmul" => Ok(OpTag::Matmul),
            "scaled_softmax_rows" => Ok(OpTag::ScaledSoftmaxRows),
            "bilinear_sample" => Ok(OpTag::BilinearSample),
            "linear_forward" => Ok(OpTag::LinearForward),
            other => Err(Error::UnknownOp(other.to_string())),
        }
    }
}

/// Gradients of `sum(upstream * op(inputs))` with respect to every input.
///
/// Inputs per tag:
/// - `matmul`: `[a, b]`
/// - `scaled_softmax_rows`: `[x, scale]` with `scale` a one-element tensor
/// - `bilinear_sample`: `[feat (HxWxC), points (Px2)]`
/// - `linear_forward`: `[x, weights, bias]`
pub fn backward(
    tag: &str,
    inputs: &[&DenseTensor],
    upstream: &DenseTensor,
) -> Result<Vec<DenseTensor>> {
    let tag: OpTag = tag.parse()?;
    let arity = match tag {
        OpTag::Matmul | OpTag::ScaledSoftmaxRows | OpTag::BilinearSample => 2,
        OpTag::LinearForward => 3,
    };
    if inputs.len() != arity {
        return Err(Error::invalid(format!(
            "{tag:?} backward expects {arity} inputs, got {}",
            inputs.len()
        )));
    }
    match tag {
        OpTag::Matmul => {
            let (da, db) = matmul_backward(inputs[0], inputs[1], upstream)?;
            Ok(vec![da, db])
        }
        OpTag::ScaledSoftmaxRows => {
            let scale = inputs[1].data().first().copied().unwrap_or(f64::NAN);
            let (dx, ds) = softmax_backward(inputs[0], scale, upstream)?;
            Ok(vec![dx, DenseTensor::vector(vec![ds])])
        }
        OpTag::BilinearSample => {
            let pts = inputs[1];
            if pts.rank() != 2 || pts.shape()[1] != 2 {
                return Err(Error::shape("bilinear_sample backward", pts.shape(), &[0, 2]));
            }
            let points: Vec<[f64; 2]> = pts.data().chunks(2).map(|p| [p[0], p[1]]).collect();
            let (df, dp) = bilinear_backward(inputs[0], &points, upstream)?;
            let dp = DenseTensor::new([points.len(), 2], dp.into_iter().flatten().collect())?;
            Ok(vec![df, dp])
        }
        OpTag::LinearForward => {
            let (dx, dw, db) = linear_backward(inputs[0], inputs[1], upstream)?;
            Ok(vec![dx, dw, db])
        }
    }
}

pub fn matmul_backward(
    a: &DenseTensor,
    b: &DenseTensor,
    upstream: &DenseTensor,
) -> Result<(DenseTensor, DenseTensor)> {
    let da = matmul(upstream, &b.transpose()?)?;
    let db = matmul(&a.transpose()?, upstream)?;
    Ok((da, db))
}

/// Returns `(dx, dweights, dbias)` for `x W + b`.
pub fn linear_backward(
    x: &DenseTensor,
    weights: &DenseTensor,
    upstream: &DenseTensor,
) -> Result<(DenseTensor, DenseTensor, DenseTensor)> {
    let (dx, dw) = matmul_backward(x, weights, upstream)?;
    let n = upstream.shape()[1];
    let mut db = vec![0.0; n];
    for row in upstream.data().chunks(n) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok((dx, dw, DenseTensor::vector(db)))
}

/// Backward of one softmax row given its output `y`: writes `dz` where
/// `y = softmax(scale * z)`.
pub fn softmax_row_backward(y: &[f64], dy: &[f64], scale: f64, dz: &mut [f64]) {
    let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    for ((d, &yi), &gi) in dz.iter_mut().zip(y).zip(dy) {
        *d = scale * yi * (gi - inner);
    }
}

/// Returns `(dx, dscale)`.
pub fn softmax_backward(
    x: &DenseTensor,
    scale: f64,
    upstream: &DenseTensor,
) -> Result<(DenseTensor, f64)> {
    if x.shape() != upstream.shape() {
        return Err(Error::shape("softmax backward", x.shape(), upstream.shape()));
    }
    let y = scaled_softmax_rows(x, scale)?;
    let c = x.shape()[1];
    let mut dx = DenseTensor::zeros(x.shape().to_vec());
    let mut dscale = 0.0;
    for r in 0..x.rows() {
        let (yr, gr, xr) = (y.row(r), upstream.row(r), x.row(r));
        softmax_row_backward(yr, gr, scale, &mut dx.data_mut()[r * c..(r + 1) * c]);
        // d/ds of softmax(s x) is y * (x - <y, x>)
        let mean_x: f64 = yr.iter().zip(xr).map(|(a, b)| a * b).sum();
        for j in 0..c {
            dscale += gr[j] * yr[j] * (xr[j] - mean_x);
        }
    }
    Ok((dx, dscale))
}

/// Gradient with respect to the sampled grid and to each sample point.
pub fn bilinear_backward(
    feat: &DenseTensor,
    points: &[[f64; 2]],
    upstream: &DenseTensor,
) -> Result<(DenseTensor, Vec<[f64; 2]>)> {
    if feat.rank() != 3 {
        return Err(Error::shape("bilinear backward", feat.shape(), &[3]));
    }
    let (h, w, c) = (feat.shape()[0], feat.shape()[1], feat.shape()[2]);
    if upstream.shape() != [points.len(), c] {
        return Err(Error::shape("bilinear backward", upstream.shape(), &[points.len(), c]));
    }
    let mut dfeat = DenseTensor::zeros(feat.shape().to_vec());
    let mut dpts = Vec::with_capacity(points.len());
    for (p, g) in points.iter().zip(upstream.data().chunks(c.max(1))) {
        bilinear_splat(dfeat.data_mut(), h, w, p[0], p[1], g);
        dpts.push(bilinear_point_grad(feat.data(), h, w, p[0], p[1], g));
    }
    Ok((dfeat, dpts))
}

/// `d <g, sample(u, v)> / d(u, v)`; zero outside the grid.
pub(crate) fn bilinear_point_grad(grid: &[f64], h: usize, w: usize, u: f64, v: f64, g: &[f64]) -> [f64; 2] {
    let c = g.len();
    let Some(taps) = bilinear_taps(h, w, u, v) else {
        return [0.0, 0.0];
    };
    let fu = u - u.floor().min((h - 1) as f64);
    let fv = v - v.floor().min((w - 1) as f64);
    let dotg = |cell: usize| -> f64 {
        grid[cell * c..(cell + 1) * c]
            .iter()
            .zip(g)
            .map(|(a, b)| a * b)
            .sum()
    };
    let [(c00, _), (c01, _), (c10, _), (c11, _)] = taps;
    let (f00, f01, f10, f11) = (dotg(c00), dotg(c01), dotg(c10), dotg(c11));
    let (h_edge, w_edge) = (c10 == c00, c01 == c00);
    let du = if h_edge { 0.0 } else { (1.0 - fv) * (f10 - f00) + fv * (f11 - f01) };
    let dv = if w_edge { 0.0 } else { (1.0 - fu) * (f01 - f00) + fu * (f11 - f10) };
    [du, dv]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_tag_is_rejected() {
        let t = DenseTensor::zeros([1, 1]);
        let err = backward("conv2d", &[&t, &t], &t).unwrap_err();
        assert!(matches!(err, Error::UnknownOp(ref s) if s == "conv2d"));
    }

    #[test]
    fn matmul_grad_of_sum_is_row_sums_of_bt() {
        let a = DenseTensor::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = DenseTensor::from_rows(&[[1.0, -1.0], [0.5, 2.0], [3.0, 0.0]]).unwrap();
        let g = DenseTensor::filled([2, 2], 1.0);
        let grads = backward("matmul", &[&a, &b], &g).unwrap();
        // d sum(AB) / dA_ik = sum_j B_kj
        let expect = [0.0, 2.5, 3.0];
        for i in 0..2 {
            assert_eq!(grads[0].row(i), &expect);
        }
    }

    #[test]
    fn single_column_softmax_has_zero_gradient() {
        let x = DenseTensor::from_rows(&[[3.0], [-1.0]]).unwrap();
        let g = DenseTensor::from_rows(&[[2.0], [5.0]]).unwrap();
        let (dx, ds) = softmax_backward(&x, 0.7, &g).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert_eq!(ds, 0.0);
    }

    #[test]
    fn bilinear_on_grid_gradient_is_one_hot() {
        let feat = DenseTensor::new([3, 4, 1], (0..12).map(|v| v as f64).collect()).unwrap();
        let g = DenseTensor::from_rows(&[[1.0]]).unwrap();
        let (df, _) = bilinear_backward(&feat, &[[1.0, 2.0]], &g).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let expect = if (i, j) == (1, 2) { 1.0 } else { 0.0 };
                assert_eq!(df.get(&[i, j, 0]), expect);
            }
        }
    }
}
