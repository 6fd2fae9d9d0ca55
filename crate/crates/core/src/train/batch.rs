//! Forward and reverse pass over a batch of training rays plus regularizer positions.

use rayon::prelude::*;

use crate::correction::{retained_window, CorrectionParams};
use crate::error::Result;
use crate::field::{logistic, Cell, ParamLayout, VoxelField};
use crate::render::{fill_depths, Ray};
use crate::sh::{basis_len, eval_basis_into, Direction, MAX_DEGREE};
use crate::vec3::Vec3;

use super::decompose::{Decomposer, RegTarget};
use super::{LossBreakdown, Touched, TrainConfig};

const RAY_CHUNK: usize = 16;
const POSITION_CHUNK: usize = 64;

/// A training ray with fixed quadrature depths and its ground-truth color.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRay {
    pub origin: Vec3,
    pub direction: Direction,
    /// Empty when the pixel ray misses the field.
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub target: [f64; 3],
}

impl TrainRay {
    pub fn new(ray: Option<&Ray>, target: [f64; 3], k: usize, stratified: bool, seed: u64) -> Result<Self> {
        let Some(ray) = ray else {
            return Ok(TrainRay {
                origin: Vec3::ZERO,
                direction: Direction::new(0.0, 0.0, 1.0)?,
                t: vec![],
                delta: vec![],
                target,
            });
        };
        let profile = crate::render::sample_ray(ray, k, stratified, seed)?;
        Ok(TrainRay { origin: ray.origin, direction: ray.direction, t: profile.t, delta: profile.delta, target })
    }

    /// Explicit depths, e.g. for gradient checks.
    pub fn with_depths(origin: Vec3, direction: Direction, near: f64, far: f64, k: usize, target: [f64; 3]) -> Self {
        let mut t = vec![0.0; k];
        let mut delta = vec![0.0; k];
        fill_depths(near, far, &mut t, &mut delta, || 0.5);
        TrainRay { origin, direction, t, delta, target }
    }

    pub fn point(&self, k: usize) -> Vec3 {
        self.origin + self.direction.vec() * self.t[k]
    }
}

/// Discrete per-ray decisions that are held constant under differentiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    /// Retained window from geometry correction, `None` when nothing was cut.
    pub window: Option<(usize, usize)>,
    /// Samples at or beyond this index are left out of the quadrature.
    pub cut: usize,
}

/// Everything needed to re-evaluate a batch with identical masks and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBatch {
    pub rays: Vec<RayState>,
    pub reg: Vec<Option<RegTarget>>,
}

/// Gradients with respect to interpolated raw parameter blocks, one record per lookup.
/// Records are kept in the per-chunk parts they were produced in; scattering walks the
/// parts in order.
#[derive(Debug, Clone, Default)]
pub struct GradBuffer {
    parts: Vec<GradPart>,
}

#[derive(Debug, Clone, Default)]
struct GradPart {
    cells: Vec<Cell>,
    values: Vec<f64>,
}

impl GradPart {
    fn push(&mut self, cell: Cell, values: &[f64]) {
        self.cells.push(cell);
        self.values.extend_from_slice(values);
    }
}

impl GradBuffer {
    fn push_part(&mut self, part: GradPart) {
        self.parts.push(part);
    }

    pub fn records(&self) -> usize {
        self.parts.iter().map(|p| p.cells.len()).sum()
    }

    fn iter(&self, stride: usize) -> impl Iterator<Item = (&Cell, &[f64])> {
        self.parts.iter().flat_map(move |p| p.cells.iter().zip(p.values.chunks_exact(stride)))
    }

    /// Distribute each record to its eight corners in record order.
    pub(crate) fn scatter_f32(&self, stride: usize, dense: &mut [f32], touched: &mut Touched) {
        for (cell, vals) in self.iter(stride) {
            for (&c, &w) in cell.corners.iter().zip(&cell.weights) {
                if w == 0.0 {
                    continue;
                }
                touched.mark(c);
                let base = c as usize * stride;
                for (d, v) in dense[base..base + stride].iter_mut().zip(vals) {
                    *d += (w * v) as f32;
                }
            }
        }
    }

    pub fn scatter_f64(&self, stride: usize, dense: &mut [f64]) {
        for (cell, vals) in self.iter(stride) {
            for (&c, &w) in cell.corners.iter().zip(&cell.weights) {
                let base = c as usize * stride;
                for (d, v) in dense[base..base + stride].iter_mut().zip(vals) {
                    *d += w * v;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    pub loss: LossBreakdown,
    pub frozen: FrozenBatch,
    pub grad: Option<GradBuffer>,
}

#[derive(Default)]
struct Scratch {
    cells: Vec<Option<Cell>>,
    rho: Vec<f64>,
    sigma0: Vec<f64>,
    sigma: Vec<f64>,
    trans0: Vec<f64>,
    trans: Vec<f64>,
    raw: Vec<f64>,
    pre0: Vec<[f64; 3]>,
    c0: Vec<[f64; 3]>,
    c_vi: Vec<[f64; 3]>,
    c_vd: Vec<[f64; 3]>,
    c_fin: Vec<[f64; 3]>,
    gamma: Vec<f64>,
    record: Vec<f64>,
}

impl Scratch {
    fn reset(&mut self, k: usize, stride: usize) {
        self.cells.clear();
        self.cells.resize(k, None);
        for v in [&mut self.rho, &mut self.sigma0, &mut self.sigma, &mut self.gamma] {
            v.clear();
            v.resize(k, 0.0);
        }
        for v in [&mut self.trans0, &mut self.trans] {
            v.clear();
            v.resize(k + 1, 0.0);
        }
        for v in [&mut self.pre0, &mut self.c0, &mut self.c_vi, &mut self.c_vd, &mut self.c_fin] {
            v.clear();
            v.resize(k, [0.0; 3]);
        }
        self.raw.resize(stride, 0.0);
        self.record.resize(stride, 0.0);
    }
}

#[inline]
fn sq_err(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

#[allow(clippy::too_many_arguments)]
fn ray_pass(
    field: &VoxelField,
    ray: &TrainRay,
    correction: Option<&CorrectionParams>,
    min_transmittance: f64,
    frozen: Option<RayState>,
    grad: Option<&mut GradPart>,
    s: &mut Scratch,
) -> (f64, f64, RayState) {
    let k = ray.t.len();
    if k == 0 {
        let l = sq_err([0.0; 3], ray.target);
        return (l, l, RayState { window: None, cut: 0 });
    }
    let layout = field.layout();
    let stride = layout.stride();
    let (l_full, low) = (layout.basis_len(), layout.low_len());
    let vd = layout.sh_vd();
    s.reset(k, stride);
    let mut y = [0.0; basis_len(MAX_DEGREE)];
    eval_basis_into(ray.direction.vec(), layout.l_max, &mut y);

    for i in 0..k {
        let cell = field.locate(ray.point(i));
        if let Some(c) = &cell {
            s.rho[i] = field.interpolate_density(c);
            s.sigma0[i] = s.rho[i].max(0.0);
        }
        s.cells[i] = cell;
    }
    let window = match frozen {
        Some(st) => st.window,
        None => correction.and_then(|c| retained_window(&s.sigma0, c)),
    };
    s.sigma.copy_from_slice(&s.sigma0);
    crate::correction::apply_window(&mut s.sigma, window);

    s.trans0[0] = 1.0;
    s.trans[0] = 1.0;
    for i in 0..k {
        s.trans0[i + 1] = s.trans0[i] * (-s.sigma0[i] * ray.delta[i]).exp();
        s.trans[i + 1] = s.trans[i] * (-s.sigma[i] * ray.delta[i]).exp();
    }
    let cut = match frozen {
        Some(st) => st.cut,
        None => (0..k)
            .find(|&i| s.trans0[i] < min_transmittance && s.trans[i] < min_transmittance)
            .unwrap_or(k),
    };

    let mut c_init = [0.0; 3];
    let mut c_final = [0.0; 3];
    for i in 0..cut {
        // zero density means zero weight in both branches and no gradient through relu
        if s.sigma0[i] == 0.0 {
            continue;
        }
        let Some(cell) = &s.cells[i] else { continue };
        field.interpolate_into(cell, stride, &mut s.raw);
        let raw = &s.raw;
        let gamma = logistic(raw[ParamLayout::GAMMA]);
        s.gamma[i] = gamma;
        let w0 = s.trans0[i] * -(-s.sigma0[i] * ray.delta[i]).exp_m1();
        let wf = s.trans[i] * -(-s.sigma[i] * ray.delta[i]).exp_m1();
        for ch in 0..3 {
            let mut pre = 0.0;
            for j in 0..l_full {
                pre += y[j] * raw[ParamLayout::SH_C0 + 3 * j + ch];
            }
            let mut cvd = 0.0;
            for h in 0..l_full - low {
                cvd += y[low + h] * raw[vd + 3 * h + ch];
            }
            let cvi = logistic(raw[ParamLayout::C_VI + ch]);
            let c0 = pre.clamp(0.0, 1.0);
            let cf = gamma * cvi + (1.0 - gamma) * cvd;
            s.pre0[i][ch] = pre;
            s.c0[i][ch] = c0;
            s.c_vi[i][ch] = cvi;
            s.c_vd[i][ch] = cvd;
            s.c_fin[i][ch] = cf;
            c_init[ch] += w0 * c0;
            c_final[ch] += wf * cf;
        }
    }
    let l0 = sq_err(c_init, ray.target);
    let lf = sq_err(c_final, ray.target);
    let state = RayState { window, cut };

    let Some(out) = grad else {
        return (l0, lf, state);
    };
    let g0 = [0, 1, 2].map(|c| 2.0 * (c_init[c] - ray.target[c]));
    let gf = [0, 1, 2].map(|c| 2.0 * (c_final[c] - ray.target[c]));
    let (mut suffix0, mut suffix_f) = (0.0, 0.0);
    for i in (0..cut).rev() {
        let delta = ray.delta[i];
        let w0 = s.trans0[i] - s.trans0[i + 1];
        let wf = s.trans[i] - s.trans[i + 1];
        let gc0: f64 = (0..3).map(|c| g0[c] * s.c0[i][c]).sum();
        let gcf: f64 = (0..3).map(|c| gf[c] * s.c_fin[i][c]).sum();
        let dtau0 = s.trans0[i + 1] * gc0 - suffix0;
        let dtau_f = s.trans[i + 1] * gcf - suffix_f;
        suffix0 += w0 * gc0;
        suffix_f += wf * gcf;

        if s.sigma0[i] == 0.0 {
            continue;
        }
        let Some(cell) = s.cells[i] else { continue };
        let kept = window.is_none_or(|(lo, hi)| lo <= i && i <= hi);
        let dsigma0 = dtau0 * delta + if kept { dtau_f * delta } else { 0.0 };
        if dsigma0 == 0.0 && w0 == 0.0 && wf == 0.0 {
            continue;
        }
        let r = &mut s.record;
        r.fill(0.0);
        if s.rho[i] > 0.0 {
            r[ParamLayout::DENSITY] = dsigma0;
        }
        let gamma = s.gamma[i];
        let mut dgamma = 0.0;
        for ch in 0..3 {
            let dc0 = w0 * g0[ch];
            // clamp passes gradient on the closed interval
            if (0.0..=1.0).contains(&s.pre0[i][ch]) {
                for j in 0..l_full {
                    r[ParamLayout::SH_C0 + 3 * j + ch] = dc0 * y[j];
                }
            }
            let dcf = wf * gf[ch];
            let cvi = s.c_vi[i][ch];
            r[ParamLayout::C_VI + ch] = dcf * gamma * cvi * (1.0 - cvi);
            dgamma += dcf * (cvi - s.c_vd[i][ch]);
            let dcvd = dcf * (1.0 - gamma);
            for h in 0..l_full - low {
                r[vd + 3 * h + ch] = dcvd * y[low + h];
            }
        }
        r[ParamLayout::GAMMA] = dgamma * gamma * (1.0 - gamma);
        out.push(cell, r);
    }
    (l0, lf, state)
}

/// Evaluate the total loss on `rays` and `positions`.
///
/// With `frozen`, correction windows, quadrature cut-offs and regularizer targets are
/// taken from a previous evaluation instead of being recomputed, so the loss is a smooth
/// function of the parameters and can be checked against finite differences.
pub fn evaluate_batch(
    field: &VoxelField,
    rays: &[TrainRay],
    positions: &[Vec3],
    cfg: &TrainConfig,
    decomposer: &Decomposer,
    frozen: Option<&FrozenBatch>,
    want_grad: bool,
) -> Result<BatchEvaluation> {
    let stride = field.stride();
    let correction = cfg.correction();
    let ray_states = frozen.map(|f| f.rays.as_slice());
    let chunks: Vec<(f64, f64, Vec<RayState>, GradPart)> = rays
        .par_chunks(RAY_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut scratch = Scratch::default();
            let mut grad = GradPart::default();
            let mut states = Vec::with_capacity(chunk.len());
            let (mut l0, mut lf) = (0.0, 0.0);
            for (j, ray) in chunk.iter().enumerate() {
                let fz = ray_states.map(|s| s[ci * RAY_CHUNK + j]);
                let (a, b, st) = ray_pass(
                    field,
                    ray,
                    correction.as_ref(),
                    cfg.min_transmittance,
                    fz,
                    want_grad.then_some(&mut grad),
                    &mut scratch,
                );
                l0 += a;
                lf += b;
                states.push(st);
            }
            (l0, lf, states, grad)
        })
        .collect();

    let mut l_pho_initial = 0.0;
    let mut l_pho_final = 0.0;
    let mut ray_out = Vec::with_capacity(rays.len());
    let mut grad = GradBuffer::default();
    for (a, b, st, g) in chunks {
        l_pho_initial += a;
        l_pho_final += b;
        ray_out.extend(st);
        grad.push_part(g);
    }

    let valid = positions.iter().filter(|p| field.bounds().contains(**p)).count();
    let (scale_vi, scale_vd) = if valid > 0 {
        (cfg.lambda_vi / valid as f64, cfg.lambda_vd / valid as f64)
    } else {
        (0.0, 0.0)
    };
    let reg_frozen = frozen.map(|f| f.reg.as_slice());
    let pos_chunks: Vec<(f64, f64, Vec<Option<RegTarget>>, GradPart)> = positions
        .par_chunks(POSITION_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut raw = vec![0.0; stride];
            let mut record = vec![0.0; stride];
            let mut grad = GradPart::default();
            let mut targets = Vec::with_capacity(chunk.len());
            let (mut l_vi, mut l_vd) = (0.0, 0.0);
            for (j, &p) in chunk.iter().enumerate() {
                let Some(cell) = field.locate(p) else {
                    targets.push(None);
                    continue;
                };
                field.interpolate_into(&cell, stride, &mut raw);
                let target = match reg_frozen.and_then(|r| r[ci * POSITION_CHUNK + j].clone()) {
                    Some(t) => t,
                    None => decomposer.target(&raw),
                };
                let g = if want_grad {
                    record.fill(0.0);
                    Some((record.as_mut_slice(), scale_vi, scale_vd))
                } else {
                    None
                };
                let (a, b) = decomposer.loss_and_grad(&raw, &target, g);
                if want_grad {
                    grad.push(cell, &record);
                }
                l_vi += a;
                l_vd += b;
                targets.push(Some(target));
            }
            (l_vi, l_vd, targets, grad)
        })
        .collect();

    let (mut l_vi, mut l_vd) = (0.0, 0.0);
    let mut reg_out = Vec::with_capacity(positions.len());
    for (a, b, t, g) in pos_chunks {
        l_vi += a;
        l_vd += b;
        reg_out.extend(t);
        grad.push_part(g);
    }
    if valid > 0 {
        l_vi /= valid as f64;
        l_vd /= valid as f64;
    }

    Ok(BatchEvaluation {
        loss: LossBreakdown::new(l_pho_initial, l_pho_final, l_vi, l_vd, cfg.lambda_vi, cfg.lambda_vd),
        frozen: FrozenBatch { rays: ray_out, reg: reg_out },
        grad: want_grad.then_some(grad),
    })
}
