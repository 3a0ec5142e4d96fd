//! Shared per-view convolutional feature extractor: a stack of 3x3,
//! stride-2, zero-padded convolutions each followed by a ReLU.

use crate::error::{Error, Result};
use crate::tensor::{seeded_init, DenseTensor, InitScheme, RngSeed};

/// Images from every camera of one agent at one frame, each `h x w x 3`
/// with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewImages {
    pub views: Vec<DenseTensor>,
    pub timestamp: u32,
}

impl MultiViewImages {
    pub fn new(views: Vec<DenseTensor>, timestamp: u32) -> Result<Self> {
        let first = views
            .first()
            .ok_or_else(|| Error::invalid("no camera views"))?
            .shape()
            .to_vec();
        if first.len() != 3 || first[2] != 3 {
            return Err(Error::shape("MultiViewImages", &first, &[0, 0, 3]));
        }
        if let Some(bad) = views.iter().find(|v| v.shape() != first.as_slice()) {
            return Err(Error::shape("MultiViewImages", bad.shape(), &first));
        }
        Ok(Self { views, timestamp })
    }

    pub fn image_size(&self) -> (usize, usize) {
        let s = self.views[0].shape();
        (s[0], s[1])
    }
}

/// One `h_f x w_f x C` map per view.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewFeatures {
    pub maps: Vec<DenseTensor>,
    /// downsampling factor relative to the image
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `out x in x 3 x 3`
    pub weight: DenseTensor,
    pub bias: DenseTensor,
}

impl Conv2d {
    pub fn seeded(cin: usize, cout: usize, seed: RngSeed) -> Self {
        let a = (6.0 / (cin * 9) as f64).sqrt();
        Self {
            weight: seeded_init(&[cout, cin, 3, 3], seed, InitScheme::Uniform(a)).expect("valid shape"),
            bias: DenseTensor::zeros([cout]),
        }
    }

    fn cin(&self) -> usize {
        self.weight.shape()[1]
    }

    fn cout(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Stride-2 convolution with one cell of zero padding, then ReLU.
    pub fn forward(&self, x: &DenseTensor) -> DenseTensor {
        let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        debug_assert_eq!(cin, self.cin());
        let cout = self.cout();
        let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
        let mut out = DenseTensor::zeros([ho, wo, cout]);
        let wd = self.weight.data();
        let xd = x.data();
        let od = out.data_mut();
        for oi in 0..ho {
            for oj in 0..wo {
                let o = &mut od[(oi * wo + oj) * cout..(oi * wo + oj + 1) * cout];
                o.copy_from_slice(self.bias.data());
                for ki in 0..3 {
                    let ii = (2 * oi + ki) as isize - 1;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for kj in 0..3 {
                        let jj = (2 * oj + kj) as isize - 1;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        let px = &xd[(ii as usize * w + jj as usize) * cin..][..cin];
                        for (co, ov) in o.iter_mut().enumerate() {
                            let base = co * cin * 9 + ki * 3 + kj;
                            let mut acc = 0.0;
                            for (ci, &xv) in px.iter().enumerate() {
                                acc += wd[base + ci * 9] * xv;
                            }
                            *ov += acc;
                        }
                    }
                }
                for v in o.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub layers: Vec<Conv2d>,
}

impl Backbone {
    /// `channels` lists the output width of each layer, e.g. `[8, 16, 32]`.
    pub fn seeded(channels: &[usize], seed: RngSeed) -> Self {
        let mut cin = 3;
        let layers = channels
            .iter()
            .enumerate()
            .map(|(k, &cout)| {
                let l = Conv2d::seeded(cin, cout, seed.derive_index(k as u64));
                cin = cout;
                l
            })
            .collect();
        Self { layers }
    }

    pub fn stride(&self) -> usize {
        1 << self.layers.len()
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map(|l| l.cout()).unwrap_or(3)
    }
}

/// Runs the shared backbone on each view independently.
pub fn backbone_extract(
    images: &MultiViewImages,
    backbone: &Backbone,
    expected_views: usize,
) -> Result<MultiViewFeatures> {
    if images.views.len() != expected_views {
        return Err(Error::ViewCount {
            expected: expected_views,
            got: images.views.len(),
        });
    }
    let stride = backbone.stride();
    let (h, w) = images.image_size();
    if h % stride != 0 || w % stride != 0 {
        return Err(Error::invalid(format!(
            "image size {h}x{w} not divisible by backbone stride {stride}"
        )));
    }
    let maps = images
        .views
        .iter()
        .map(|img| backbone.layers.iter().fold(img.clone(), |x, l| l.forward(&x)))
        .collect();
    Ok(MultiViewFeatures { maps, stride })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> MultiViewImages {
        let views = (0..n)
            .map(|v| {
                let mut t = DenseTensor::zeros([32, 48, 3]);
                for i in 0..32 {
                    for j in 0..48 {
                        for c in 0..3 {
                            t.set(&[i, j, c], f(v, i, j, c));
                        }
                    }
                }
                t
            })
            .collect();
        MultiViewImages::new(views, 0).unwrap()
    }

    #[test]
    fn six_in_six_out_with_stride() {
        let bb = Backbone::seeded(&[8, 16, 32], RngSeed(1));
        let imgs = images(6, |v, i, j, c| ((v + i * 3 + j * 5 + c) % 7) as f64 / 7.0);
        let f = backbone_extract(&imgs, &bb, 6).unwrap();
        assert_eq!(f.maps.len(), 6);
        assert_eq!(f.stride, 8);
        for m in &f.maps {
            assert_eq!(m.shape(), &[4, 6, 32]);
        }
    }

    #[test]
    fn wrong_view_count_is_rejected() {
        let bb = Backbone::seeded(&[4], RngSeed(1));
        let imgs = images(5, |_, _, _, _| 0.5);
        assert!(matches!(
            backbone_extract(&imgs, &bb, 6),
            Err(Error::ViewCount { expected: 6, got: 5 })
        ));
    }

    #[test]
    fn constant_image_gives_constant_interior() {
        let bb = Backbone::seeded(&[8, 16, 32], RngSeed(3));
        let imgs = images(6, |_, _, _, c| 0.2 + 0.3 * c as f64);
        let f = backbone_extract(&imgs, &bb, 6).unwrap();
        // three stride-2 layers: border effects reach one output cell deep
        let m = &f.maps[0];
        let (h, w, c) = (m.shape()[0], m.shape()[1], m.shape()[2]);
        for ch in 0..c {
            let r = m.get(&[1, 1, ch]);
            for i in 1..h - 1 {
                for j in 1..w - 1 {
                    assert!((m.get(&[i, j, ch]) - r).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identical_views_identical_maps() {
        let bb = Backbone::seeded(&[8, 16, 32], RngSeed(3));
        let imgs = images(6, |_, i, j, c| ((i * j + c) % 5) as f64 / 5.0);
        let f = backbone_extract(&imgs, &bb, 6).unwrap();
        for m in &f.maps[1..] {
            assert_eq!(m, &f.maps[0]);
        }
    }
}
