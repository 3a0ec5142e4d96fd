//! Analytic backward passes against central finite differences.

use crate::bev::{deformable_attention, deformable_attention_backward, deformable_attention_traced, DeformableAttnParams};
use crate::error::Result;
use crate::fusion::FusionBlock;
use crate::nn::Linear;
use crate::tensor::{backward, bilinear_sample, linear_forward, matmul, scaled_softmax_rows, seeded_init, DenseTensor, InitScheme, RngSeed};

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, so entries that are zero up to
/// rounding are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;
/// Sample locations closer than this to a cell line are redrawn: bilinear
/// interpolation has a kink there.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: &'static str,
    pub cases: usize,
    /// scalar entries compared
    pub entries: usize,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self, min_cases: usize) -> bool {
        self.cases >= min_cases && self.max_rel_error <= GRAD_TOL
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic[k]` with the central difference of `loss` in every
/// entry of `inputs[index]`, for each `(index, analytic)` pair. Inputs are
/// restored afterwards. Returns `(entries, max relative error)`.
pub fn finite_difference_check(
    inputs: &mut [DenseTensor],
    analytic: &[(usize, &DenseTensor)],
    loss: impl Fn(&[DenseTensor]) -> f64,
) -> (usize, f64) {
    let mut entries = 0;
    let mut worst = 0.0f64;
    for &(index, grad) in analytic {
        assert_eq!(inputs[index].shape(), grad.shape(), "gradient shape of input {index}");
        for k in 0..grad.len() {
            let orig = inputs[index].data()[k];
            inputs[index].data_mut()[k] = orig + GRAD_EPS;
            let plus = loss(inputs);
            inputs[index].data_mut()[k] = orig - GRAD_EPS;
            let minus = loss(inputs);
            inputs[index].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * GRAD_EPS);
            worst = worst.max(rel_error(grad.data()[k], numeric));
            entries += 1;
        }
    }
    (entries, worst)
}

fn random(shape: &[usize], seed: RngSeed, a: f64) -> DenseTensor {
    seeded_init(shape, seed, InitScheme::Uniform(a)).expect("non-empty shape")
}

fn weighted_sum(upstream: &DenseTensor, out: &DenseTensor) -> f64 {
    assert_eq!(upstream.shape(), out.shape());
    upstream.dot(out)
}

fn near_kink(x: f64) -> bool {
    (x - x.round()).abs() < KINK_MARGIN
}

struct Tally {
    name: &'static str,
    cases: usize,
    entries: usize,
    worst: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            entries: 0,
            worst: 0.0,
        }
    }

    fn add(&mut self, (entries, worst): (usize, f64)) {
        self.cases += 1;
        self.entries += entries;
        self.worst = self.worst.max(worst);
    }

    fn done(self) -> GradCheck {
        GradCheck {
            name: self.name,
            cases: self.cases,
            entries: self.entries,
            max_rel_error: self.worst,
        }
    }
}

/// Draws seeds from `seed` until `cases` of them produce a usable case.
fn run_cases(
    name: &'static str,
    cases: usize,
    seed: RngSeed,
    mut case: impl FnMut(RngSeed) -> Result<Option<(usize, f64)>>,
) -> Result<GradCheck> {
    let mut tally = Tally::new(name);
    let mut k = 0;
    while tally.cases < cases {
        if let Some(r) = case(seed.derive_index(k))? {
            tally.add(r);
        }
        k += 1;
    }
    Ok(tally.done())
}

fn dims(seed: RngSeed, lo: usize, hi: usize, salt: u64) -> usize {
    lo + (seed.unit(salt) * (hi - lo + 1) as f64) as usize % (hi - lo + 1)
}

pub fn check_matmul(cases: usize, seed: RngSeed) -> Result<GradCheck> {
    run_cases("matmul", cases, seed, |s| {
        let (n, k, m) = (dims(s, 1, 5, 0), dims(s, 1, 5, 1), dims(s, 1, 5, 2));
        let mut inputs = vec![random(&[n, k], s.derive("a"), 1.0), random(&[k, m], s.derive("b"), 1.0)];
        let up = random(&[n, m], s.derive("up"), 1.0);
        let g = backward("matmul", &[&inputs[0], &inputs[1]], &up)?;
        Ok(Some(finite_difference_check(&mut inputs, &[(0, &g[0]), (1, &g[1])], |x| {
            weighted_sum(&up, &matmul(&x[0], &x[1]).unwrap())
        })))
    })
}

pub fn check_linear(cases: usize, seed: RngSeed) -> Result<GradCheck> {
    run_cases("linear", cases, seed, |s| {
        let (n, din, dout) = (dims(s, 1, 4, 0), dims(s, 1, 6, 1), dims(s, 1, 6, 2));
        let mut inputs = vec![
            random(&[n, din], s.derive("x"), 1.0),
            random(&[din, dout], s.derive("w"), 1.0),
            random(&[dout], s.derive("b"), 1.0),
        ];
        let up = random(&[n, dout], s.derive("up"), 1.0);
        let g = backward("linear_forward", &[&inputs[0], &inputs[1], &inputs[2]], &up)?;
        Ok(Some(finite_difference_check(
            &mut inputs,
            &[(0, &g[0]), (1, &g[1]), (2, &g[2])],
            |x| weighted_sum(&up, &linear_forward(&x[0], &x[1], &x[2]).unwrap()),
        )))
    })
}

pub fn check_softmax(cases: usize, seed: RngSeed) -> Result<GradCheck> {
    run_cases("scaled_softmax", cases, seed, |s| {
        let (n, m) = (dims(s, 1, 4, 0), dims(s, 2, 7, 1));
        let scale = 0.2 + 1.8 * s.unit(3);
        let mut inputs = vec![random(&[n, m], s.derive("x"), 2.0), DenseTensor::vector(vec![scale])];
        let up = random(&[n, m], s.derive("up"), 1.0);
        let g = backward("scaled_softmax_rows", &[&inputs[0], &inputs[1]], &up)?;
        Ok(Some(finite_difference_check(&mut inputs, &[(0, &g[0]), (1, &g[1])], |x| {
            weighted_sum(&up, &scaled_softmax_rows(&x[0], x[1].data()[0]).unwrap())
        })))
    })
}

pub fn check_bilinear(cases: usize, seed: RngSeed) -> Result<GradCheck> {
    run_cases("bilinear_sample", cases, seed, |s| {
        let (h, w, c, p) = (dims(s, 2, 6, 0), dims(s, 2, 6, 1), dims(s, 1, 4, 2), dims(s, 1, 6, 3));
        let pts: Vec<f64> = (0..p)
            .flat_map(|k| {
                [
                    -0.5 + (h as f64) * s.unit(10 + 2 * k as u64),
                    -0.5 + (w as f64) * s.unit(11 + 2 * k as u64),
                ]
            })
            .collect();
        if pts.iter().any(|&x| near_kink(x)) {
            return Ok(None);
        }
        let mut inputs = vec![random(&[h, w, c], s.derive("feat"), 1.0), DenseTensor::new([p, 2], pts)?];
        let up = random(&[p, c], s.derive("up"), 1.0);
        let g = backward("bilinear_sample", &[&inputs[0], &inputs[1]], &up)?;
        Ok(Some(finite_difference_check(&mut inputs, &[(0, &g[0]), (1, &g[1])], |x| {
            let points: Vec<[f64; 2]> = x[1].data().chunks(2).map(|q| [q[0], q[1]]).collect();
            weighted_sum(&up, &bilinear_sample(&x[0], &points).unwrap())
        })))
    })
}

fn with_tensors(params: &DeformableAttnParams, t: &[DenseTensor]) -> DeformableAttnParams {
    let mut p = params.clone();
    for (dst, src) in p.tensors_mut().into_iter().zip(t) {
        *dst = src.clone();
    }
    p
}

/// Gradients with respect to the query, every value map and every
/// parameter tensor (the offset network included), two feature levels.
pub fn check_deformable(cases: usize, seed: RngSeed) -> Result<GradCheck> {
    run_cases("deformable_attention", cases, seed, |s| {
        let (c, heads, points, nq) = (4, 2, 2, dims(s, 1, 3, 0));
        let sizes = [(4, 5), (3, 3)];
        let mut params = DeformableAttnParams::seeded(c, heads, 2, points, s.derive("params"))?;
        // a larger offset network than the default init makes offsets matter
        params.offset_net = Linear::seeded_scaled(c, heads * 2 * points * 2, s.derive("offset"), 1.0);
        let query = random(&[nq, c], s.derive("q"), 1.0);
        let maps: Vec<DenseTensor> = sizes
            .iter()
            .enumerate()
            .map(|(l, &(h, w))| random(&[h, w, c], s.derive("v").derive_index(l as u64), 1.0))
            .collect();
        let refs: Vec<[f64; 2]> = (0..nq)
            .flat_map(|q| {
                sizes
                    .iter()
                    .enumerate()
                    .map(move |(l, &(h, w))| {
                        let k = (q * 2 + l) as u64;
                        [(h - 1) as f64 * s.unit(20 + 2 * k), (w - 1) as f64 * s.unit(21 + 2 * k)]
                    })
            })
            .collect();
        let map_refs: Vec<&DenseTensor> = maps.iter().collect();
        let (_, trace) = deformable_attention_traced(&query, &map_refs, &refs, &params)?;
        if trace.locations.iter().flatten().any(|&x| near_kink(x)) {
            return Ok(None);
        }
        let up = random(&[nq, c], s.derive("up"), 1.0);
        let g = deformable_attention_backward(&query, &map_refs, &refs, &params, &up)?;

        let mut inputs = vec![query, maps[0].clone(), maps[1].clone()];
        inputs.extend(params.tensors().into_iter().cloned());
        let grads: Vec<&DenseTensor> = [&g.query, &g.value_maps[0], &g.value_maps[1]]
            .into_iter()
            .chain(g.params.tensors())
            .collect();
        let pairs: Vec<(usize, &DenseTensor)> = grads.into_iter().enumerate().collect();
        Ok(Some(finite_difference_check(&mut inputs, &pairs, |x| {
            let p = with_tensors(&params, &x[3..]);
            weighted_sum(&up, &deformable_attention(&x[0], &[&x[1], &x[2]], &refs, &p).unwrap())
        })))
    })
}

/// One fusion block against its analytic backward: query map, value map,
/// attention parameters and gate. `masked` draws a random 0/1 validity mask
/// as the V2X block sees it; otherwise no mask, as in temporal fusion.
fn check_fusion(name: &'static str, masked: bool, cases: usize, seed: RngSeed) -> Result<GradCheck> {
    run_cases(name, cases, seed, |s| {
        let (h, w, c) = (3, 4, 4);
        let mut block = FusionBlock::seeded(c, 2, 2, s.derive("block"))?;
        block.gate = Linear::seeded(c, c, s.derive("gate"));
        let query = random(&[h, w, c], s.derive("q"), 1.0);
        let value = random(&[h, w, c], s.derive("v"), 1.0);
        let mask: Option<Vec<f64>> = masked.then(|| (0..h * w).map(|k| if s.unit(100 + k as u64) < 0.7 { 1.0 } else { 0.0 }).collect());
        let cells: Vec<usize> = (0..h * w).filter(|&k| mask.as_ref().is_none_or(|m| m[k] != 0.0)).collect();
        if cells.is_empty() {
            return Ok(None);
        }
        let rows: Vec<Vec<f64>> = cells.iter().map(|&k| query.data()[k * c..(k + 1) * c].to_vec()).collect();
        let refs: Vec<[f64; 2]> = cells.iter().map(|&k| [(k / w) as f64, (k % w) as f64]).collect();
        let (_, trace) = deformable_attention_traced(&DenseTensor::from_rows(&rows)?, &[&value], &refs, &block.attn)?;
        if trace.locations.iter().flatten().any(|&x| near_kink(x)) {
            return Ok(None);
        }
        let up = random(&[h, w, c], s.derive("up"), 1.0);
        let g = block.backward(&query, &value, mask.as_deref(), &up)?;

        let mut inputs = vec![query, value];
        inputs.extend(block.attn.tensors().into_iter().cloned());
        inputs.extend(block.gate.tensors().into_iter().cloned());
        let grads: Vec<&DenseTensor> = [&g.query, &g.value]
            .into_iter()
            .chain(g.attn.tensors())
            .chain(g.gate.tensors())
            .collect();
        let pairs: Vec<(usize, &DenseTensor)> = grads.into_iter().enumerate().collect();
        let n_attn = block.attn.tensors().len();
        Ok(Some(finite_difference_check(&mut inputs, &pairs, |x| {
            let mut b = block.clone();
            b.attn = with_tensors(&block.attn, &x[2..2 + n_attn]);
            b.gate.weight = x[2 + n_attn].clone();
            b.gate.bias = x[3 + n_attn].clone();
            weighted_sum(&up, &b.forward(&x[0], &x[1], mask.as_deref()).unwrap())
        })))
    })
}

pub fn check_temporal_fusion(cases: usize, seed: RngSeed) -> Result<GradCheck> {
    check_fusion("temporal_fusion", false, cases, seed)
}

pub fn check_v2x_fusion(cases: usize, seed: RngSeed) -> Result<GradCheck> {
    check_fusion("v2x_fusion", true, cases, seed)
}

/// Every gradient check with `cases` accepted cases each.
pub fn gradient_suite(cases: usize, seed: RngSeed) -> Result<Vec<GradCheck>> {
    Ok(vec![
        check_matmul(cases, seed.derive("matmul"))?,
        check_linear(cases, seed.derive("linear"))?,
        check_softmax(cases, seed.derive("softmax"))?,
        check_bilinear(cases, seed.derive("bilinear"))?,
        check_deformable(cases, seed.derive("deformable"))?,
        check_temporal_fusion(cases, seed.derive("temporal"))?,
        check_v2x_fusion(cases, seed.derive("v2x"))?,
    ])
}
