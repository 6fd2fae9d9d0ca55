//! Appearance-decomposition regularizers.
//!
//! At each regularizer position the initial color `c0` is sampled over a fixed direction
//! set and fit with SH. The low-degree part, averaged over the directions, becomes the
//! target for `c_vi`; the high-degree part becomes the per-direction target for `c_vd`.
//! Targets are constants for differentiation.

use crate::error::{Error, Result};
use crate::field::{logistic, ParamLayout, VoxelField};
use crate::sh::{self, basis_means, DirectionSet, ShDesign, ShFit};
use crate::vec3::Vec3;

use super::ShConfig;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecompositionLosses {
    /// Mean over fitted positions of `‖c_vi - c̃_vi‖²`.
    pub l_vi: f64,
    /// Mean over fitted positions of `Σ_i ‖c_vd(d_i) - c̃_vd(d_i)‖²`.
    pub l_vd: f64,
    /// Positions that could not be fit (outside the field).
    pub skipped: usize,
}

/// Reference evaluation through the public SH routines: per position, sample `c0` at every
/// direction, fit each channel, split at `sh.split_degree`, compare with the field's own
/// `c_vi` and `c_vd`.
pub fn decomposition_losses(
    field: &VoxelField,
    positions: &[Vec3],
    dirs: &DirectionSet,
    sh: &ShConfig,
) -> Result<DecompositionLosses> {
    if positions.is_empty() {
        return Err(Error::invalid("no regularizer positions"));
    }
    let design = ShDesign::new(dirs, sh.l_max);
    let mut out = DecompositionLosses::default();
    let mut fitted = 0usize;
    for &p in positions {
        let Ok(design) = &design else {
            out.skipped += 1;
            continue;
        };
        if !field.bounds().contains(p) {
            out.skipped += 1;
            continue;
        }
        let samples: Vec<_> = dirs.iter().map(|d| field.eval_radiance(p, d)).collect();
        let fits: Result<Vec<ShFit>> = (0..3)
            .map(|ch| design.fit(&samples.iter().map(|s| s.c0[ch]).collect::<Vec<_>>()))
            .collect();
        let targets = match fits.and_then(|f| {
            let f: [ShFit; 3] = f.try_into().expect("three channels");
            sh::split_targets(&f, dirs, sh.split_degree)
        }) {
            Ok(t) => t,
            Err(Error::InvalidSplit { .. }) => {
                return Err(Error::InvalidSplit { split_degree: sh.split_degree, l_max: sh.l_max })
            }
            Err(_) => {
                out.skipped += 1;
                continue;
            }
        };
        let c_vi = samples[0].c_vi;
        out.l_vi += (0..3).map(|c| (c_vi[c] - targets.c_vi_target[c]).powi(2)).sum::<f64>();
        out.l_vd += samples
            .iter()
            .zip(&targets.c_vd_target)
            .map(|(s, t)| (0..3).map(|c| (s.c_vd[c] - t[c]).powi(2)).sum::<f64>())
            .sum::<f64>();
        fitted += 1;
    }
    if fitted == 0 {
        return Err(Error::DegenerateBatch(positions.len()));
    }
    out.l_vi /= fitted as f64;
    out.l_vd /= fitted as f64;
    Ok(out)
}

/// Constant supervision targets at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct RegTarget {
    pub vi: [f64; 3],
    /// High-degree coefficients of the `c0` fit, `[h * 3 + channel]`.
    pub k_high: Vec<f64>,
}

/// Precomputed fit machinery for a fixed direction set, used inside the training loop.
///
/// Because the directions never change, `k* = (YᵀY)⁻¹Yᵀ s` reduces to one matrix-vector
/// product, the view-independent target to a dot product with the basis means, and
/// `Σ_i ‖Y_high(d_i) e‖²` to the quadratic form `eᵀ (Y_highᵀ Y_high) e`.
#[derive(Debug, Clone)]
pub struct Decomposer {
    layout: ParamLayout,
    design: ShDesign,
    projection: Vec<f64>,
    low_means: Vec<f64>,
    high_gram: Vec<f64>,
}

impl Decomposer {
    pub fn new(layout: ParamLayout, sh: &ShConfig) -> Result<Self> {
        Self::with_directions(layout, &DirectionSet::fibonacci(sh.directions)?, sh)
    }

    pub fn with_directions(layout: ParamLayout, dirs: &DirectionSet, sh: &ShConfig) -> Result<Self> {
        if layout.l_max != sh.l_max || layout.split_degree != sh.split_degree {
            return Err(Error::Config(format!(
                "sh config (l_max {}, split {}) disagrees with field layout (l_max {}, split {})",
                sh.l_max, sh.split_degree, layout.l_max, layout.split_degree
            )));
        }
        let design = ShDesign::new(dirs, layout.l_max)?;
        let projection = design.projection();
        let low_means = basis_means(dirs, layout.split_degree);
        let (low, h) = (layout.low_len(), layout.high_len());
        let mut high_gram = vec![0.0; h * h];
        for i in 0..design.num_directions() {
            let y = &design.row(i)[low..];
            for a in 0..h {
                for b in 0..h {
                    high_gram[a * h + b] += y[a] * y[b];
                }
            }
        }
        Ok(Decomposer { layout, design, projection, low_means, high_gram })
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    /// Fit `c0` of the raw block over the direction set and split it.
    pub fn target(&self, raw: &[f64]) -> RegTarget {
        let l = self.layout.basis_len();
        let low = self.layout.low_len();
        let n = self.design.num_directions();
        let sh_c0 = &raw[ParamLayout::SH_C0..ParamLayout::SH_C0 + 3 * l];
        let mut samples = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let y = self.design.row(i);
            let mut acc = [0.0; 3];
            for (j, yj) in y.iter().enumerate() {
                for ch in 0..3 {
                    acc[ch] += yj * sh_c0[3 * j + ch];
                }
            }
            for ch in 0..3 {
                samples[ch][i] = acc[ch].clamp(0.0, 1.0);
            }
        }
        let mut vi = [0.0; 3];
        let mut k_high = vec![0.0; 3 * (l - low)];
        for (ch, s) in samples.iter().enumerate() {
            for j in 0..l {
                let kj = sh::dot(&self.projection[j * n..(j + 1) * n], s);
                if j < low {
                    vi[ch] += kj * self.low_means[j];
                } else {
                    k_high[3 * (j - low) + ch] = kj;
                }
            }
        }
        RegTarget { vi, k_high }
    }

    /// `(l_vi, l_vd)` contributions at one position, and optionally their gradient with
    /// respect to the raw block scaled by `(scale_vi, scale_vd)`.
    pub fn loss_and_grad(
        &self,
        raw: &[f64],
        target: &RegTarget,
        grad: Option<(&mut [f64], f64, f64)>,
    ) -> (f64, f64) {
        let h = self.layout.high_len();
        let vd = self.layout.sh_vd();
        let mut l_vi = 0.0;
        let mut c_vi = [0.0; 3];
        for ch in 0..3 {
            c_vi[ch] = logistic(raw[ParamLayout::C_VI + ch]);
            l_vi += (c_vi[ch] - target.vi[ch]).powi(2);
        }
        let err: Vec<f64> = (0..3 * h).map(|i| raw[vd + i] - target.k_high[i]).collect();
        let mut l_vd = 0.0;
        let mut he = vec![0.0; 3 * h];
        for a in 0..h {
            for b in 0..h {
                let g = self.high_gram[a * h + b];
                for ch in 0..3 {
                    he[3 * a + ch] += g * err[3 * b + ch];
                }
            }
        }
        for i in 0..3 * h {
            l_vd += err[i] * he[i];
        }
        if let Some((out, scale_vi, scale_vd)) = grad {
            for ch in 0..3 {
                out[ParamLayout::C_VI + ch] +=
                    scale_vi * 2.0 * (c_vi[ch] - target.vi[ch]) * c_vi[ch] * (1.0 - c_vi[ch]);
            }
            for i in 0..3 * h {
                out[vd + i] += scale_vd * 2.0 * he[i];
            }
        }
        (l_vi, l_vd)
    }
}
