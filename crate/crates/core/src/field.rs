//! Dense trilinear voxel grid holding every trainable radiance parameter.
//!
//! Grid points sit on a lattice spanning the bounds exactly: point `i` along an axis is
//! at `min + i * (max - min) / (n - 1)`. Parameters are stored voxel-major so the eight
//! corners of a trilinear lookup are eight contiguous blocks.

use crate::error::{Error, Result};
use crate::sh::{basis_len, eval_basis_into, Direction, MAX_DEGREE};
use crate::vec3::Vec3;

pub const INIT_DENSITY_RAW: f32 = 0.1;
pub const INIT_COLOR_RAW: f32 = 0.0;
pub const INIT_GAMMA_RAW: f32 = 2.0;

/// Axis-aligned box, stored at checkpoint precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: [f32; 3],
    pub max: [f32; 3],
}

impl Bounds {
    pub fn new(min: [f32; 3], max: [f32; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(max[a] - min[a] > 0.0) || !min[a].is_finite() || !max[a].is_finite() {
                return Err(Error::invalid(format!(
                    "bounds {min:?}..{max:?} have no positive extent on axis {a}"
                )));
            }
        }
        Ok(Bounds { min, max })
    }

    /// Cube of side `2 * half_extent` around `center`.
    pub fn cube(center: Vec3, half_extent: f64) -> Result<Self> {
        let c = center.to_array();
        Bounds::new(
            [0, 1, 2].map(|a| (c[a] - half_extent) as f32),
            [0, 1, 2].map(|a| (c[a] + half_extent) as f32),
        )
    }

    pub fn min_vec(&self) -> Vec3 {
        Vec3::new(self.min[0] as f64, self.min[1] as f64, self.min[2] as f64)
    }

    pub fn max_vec(&self) -> Vec3 {
        Vec3::new(self.max[0] as f64, self.max[1] as f64, self.max[2] as f64)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] as f64 && p[a] <= self.max[a] as f64)
    }

    /// Slab test; returns the parametric interval of `o + t d` inside the box, clipped to `t >= 0`.
    pub fn intersect(&self, o: Vec3, d: Vec3) -> Option<(f64, f64)> {
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let (lo, hi) = (self.min[a] as f64, self.max[a] as f64);
            if d[a] == 0.0 {
                if o[a] < lo || o[a] > hi {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[a];
            let (mut ta, mut tb) = ((lo - o[a]) * inv, (hi - o[a]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
        (t1 > t0).then_some((t0, t1))
    }
}

/// Offsets of each parameter group inside one voxel's block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub l_max: usize,
    pub split_degree: usize,
}

impl ParamLayout {
    pub const DENSITY: usize = 0;
    pub const C_VI: usize = 1;
    pub const GAMMA: usize = 4;
    pub const SH_C0: usize = 5;

    pub fn new(l_max: usize, split_degree: usize) -> Result<Self> {
        if l_max > MAX_DEGREE {
            return Err(Error::invalid(format!("l_max {l_max} above {MAX_DEGREE}")));
        }
        crate::sh::check_split(split_degree, l_max)?;
        Ok(ParamLayout { l_max, split_degree })
    }

    /// Full basis length `L`.
    pub fn basis_len(&self) -> usize {
        basis_len(self.l_max)
    }

    /// Number of basis functions with degree `<= split_degree`.
    pub fn low_len(&self) -> usize {
        basis_len(self.split_degree)
    }

    pub fn high_len(&self) -> usize {
        self.basis_len() - self.low_len()
    }

    pub fn sh_vd(&self) -> usize {
        Self::SH_C0 + 3 * self.basis_len()
    }

    pub fn stride(&self) -> usize {
        self.sh_vd() + 3 * self.high_len()
    }

    /// `(kind, offset, per-voxel width)` in declaration order.
    pub fn groups(&self) -> [(ParamKind, usize, usize); 5] {
        [
            (ParamKind::Density, Self::DENSITY, 1),
            (ParamKind::ViColor, Self::C_VI, 3),
            (ParamKind::Gamma, Self::GAMMA, 1),
            (ParamKind::ShC0, Self::SH_C0, 3 * self.basis_len()),
            (ParamKind::ShVd, self.sh_vd(), 3 * self.high_len()),
        ]
    }

    pub fn kind_of(&self, offset: usize) -> ParamKind {
        self.groups()
            .into_iter()
            .rev()
            .find(|&(_, start, _)| offset >= start)
            .map(|(k, _, _)| k)
            .expect("offset 0 is density")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Density,
    ViColor,
    Gamma,
    ShC0,
    ShVd,
}

/// Eight lattice corners and their trilinear weights.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub corners: [u32; 8],
    pub weights: [f64; 8],
}

/// Activated quantities at one point and direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadianceSample {
    pub sigma0: f64,
    pub c0: [f64; 3],
    pub c_vi: [f64; 3],
    pub c_vd: [f64; 3],
    pub gamma: f64,
    pub c_final: [f64; 3],
}

impl RadianceSample {
    pub const VACUUM: RadianceSample = RadianceSample {
        sigma0: 0.0,
        c0: [0.0; 3],
        c_vi: [0.0; 3],
        c_vd: [0.0; 3],
        gamma: 1.0,
        c_final: [0.0; 3],
    };
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    resolution: [usize; 3],
    bounds: Bounds,
    layout: ParamLayout,
    params: Vec<f32>,
}

impl VoxelField {
    /// Fresh field: small positive density, mid-gray view-independent color, blend biased
    /// toward the view-independent branch, all SH coefficients zero.
    pub fn new(resolution: [usize; 3], bounds: Bounds, layout: ParamLayout) -> Result<Self> {
        let mut field = Self::zeroed(resolution, bounds, layout)?;
        let stride = layout.stride();
        for block in field.params.chunks_exact_mut(stride) {
            block[ParamLayout::DENSITY] = INIT_DENSITY_RAW;
            block[ParamLayout::C_VI..ParamLayout::C_VI + 3].fill(INIT_COLOR_RAW);
            block[ParamLayout::GAMMA] = INIT_GAMMA_RAW;
        }
        Ok(field)
    }

    pub fn zeroed(resolution: [usize; 3], bounds: Bounds, layout: ParamLayout) -> Result<Self> {
        if resolution.iter().any(|&n| n < 2) {
            return Err(Error::invalid(format!(
                "resolution {resolution:?}: every axis needs at least 2 lattice points"
            )));
        }
        // Re-validate in case the caller built `Bounds` by hand.
        let bounds = Bounds::new(bounds.min, bounds.max)?;
        let count = resolution.iter().product::<usize>();
        if count > u32::MAX as usize {
            return Err(Error::invalid("resolution too large"));
        }
        Ok(VoxelField { resolution, bounds, layout, params: vec![0.0; count * layout.stride()] })
    }

    pub(crate) fn from_parts(
        resolution: [usize; 3],
        bounds: Bounds,
        layout: ParamLayout,
        params: Vec<f32>,
    ) -> Result<Self> {
        let mut f = Self::zeroed(resolution, bounds, layout)?;
        if params.len() != f.params.len() {
            return Err(Error::invalid("parameter buffer size mismatch"));
        }
        f.params = params;
        Ok(f)
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn num_voxels(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn stride(&self) -> usize {
        self.layout.stride()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.resolution[0] * (iy + self.resolution[1] * iz)
    }

    pub fn voxel(&self, idx: usize) -> &[f32] {
        let s = self.stride();
        &self.params[idx * s..(idx + 1) * s]
    }

    pub fn voxel_mut(&mut self, idx: usize) -> &mut [f32] {
        let s = self.stride();
        &mut self.params[idx * s..(idx + 1) * s]
    }

    pub fn spacing(&self) -> Vec3 {
        let e = self.bounds.max_vec() - self.bounds.min_vec();
        Vec3::new(
            e.x / (self.resolution[0] - 1) as f64,
            e.y / (self.resolution[1] - 1) as f64,
            e.z / (self.resolution[2] - 1) as f64,
        )
    }

    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        let s = self.spacing();
        let m = self.bounds.min_vec();
        Vec3::new(m.x + ix as f64 * s.x, m.y + iy as f64 * s.y, m.z + iz as f64 * s.z)
    }

    /// Center of the voxel with flat index `idx`.
    pub fn voxel_center_flat(&self, idx: usize) -> Vec3 {
        let [nx, ny, _] = self.resolution;
        self.voxel_center(idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    /// Trilinear cell containing `p`, or `None` outside the bounds.
    pub fn locate(&self, p: Vec3) -> Option<Cell> {
        if !self.bounds.contains(p) {
            return None;
        }
        let m = self.bounds.min_vec();
        let s = self.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let u = (p[a] - m[a]) / s[a];
            let i = (u.floor().max(0.0) as usize).min(self.resolution[a] - 2);
            base[a] = i;
            frac[a] = (u - i as f64).clamp(0.0, 1.0);
        }
        let [nx, ny, _] = self.resolution;
        let origin = base[0] + nx * (base[1] + ny * base[2]);
        let mut corners = [0u32; 8];
        let mut weights = [0.0; 8];
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            corners[c] = (origin + dx + nx * (dy + ny * dz)) as u32;
            let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
            let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
            let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
            weights[c] = wx * wy * wz;
        }
        Some(Cell { corners, weights })
    }

    /// Interpolate the first `width` raw parameters of every corner into `out`.
    #[inline]
    pub fn interpolate_into(&self, cell: &Cell, width: usize, out: &mut [f64]) {
        let s = self.stride();
        out[..width].fill(0.0);
        for (&c, &w) in cell.corners.iter().zip(&cell.weights) {
            if w == 0.0 {
                continue;
            }
            let block = &self.params[c as usize * s..c as usize * s + width];
            for (o, &v) in out[..width].iter_mut().zip(block) {
                *o += w * v as f64;
            }
        }
    }

    #[inline]
    pub fn interpolate_density(&self, cell: &Cell) -> f64 {
        let s = self.stride();
        cell.corners
            .iter()
            .zip(&cell.weights)
            .map(|(&c, &w)| w * self.params[c as usize * s] as f64)
            .sum()
    }

    /// Trilinearly interpolated raw parameters at `p`; `None` outside the bounds.
    pub fn sample_field(&self, p: Vec3) -> Option<Vec<f64>> {
        let cell = self.locate(p)?;
        let mut out = vec![0.0; self.stride()];
        self.interpolate_into(&cell, self.stride(), &mut out);
        Some(out)
    }

    pub fn eval_radiance(&self, p: Vec3, d: Direction) -> RadianceSample {
        let Some(raw) = self.sample_field(p) else {
            return RadianceSample::VACUUM;
        };
        let mut y = [0.0; basis_len(MAX_DEGREE)];
        eval_basis_into(d.vec(), self.layout.l_max, &mut y);
        activate(&raw, &y, self.layout)
    }
}

/// Apply the activations to an interpolated raw parameter block given `y(d)`.
#[inline]
pub fn activate(raw: &[f64], y: &[f64], layout: ParamLayout) -> RadianceSample {
    let l = layout.basis_len();
    let low = layout.low_len();
    let vd = layout.sh_vd();
    let sigma0 = raw[ParamLayout::DENSITY].max(0.0);
    let gamma = logistic(raw[ParamLayout::GAMMA]);
    let mut c0 = [0.0; 3];
    let mut c_vi = [0.0; 3];
    let mut c_vd = [0.0; 3];
    let mut c_final = [0.0; 3];
    for ch in 0..3 {
        c_vi[ch] = logistic(raw[ParamLayout::C_VI + ch]);
        let mut acc = 0.0;
        for j in 0..l {
            acc += y[j] * raw[ParamLayout::SH_C0 + 3 * j + ch];
        }
        c0[ch] = acc.clamp(0.0, 1.0);
        let mut acc = 0.0;
        for h in 0..l - low {
            acc += y[low + h] * raw[vd + 3 * h + ch];
        }
        c_vd[ch] = acc;
        c_final[ch] = gamma * c_vi[ch] + (1.0 - gamma) * c_vd[ch];
    }
    RadianceSample { sigma0, c0, c_vi, c_vd, gamma, c_final }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds() -> Bounds {
        Bounds::new([0.0; 3], [1.0; 3]).unwrap()
    }

    fn layout() -> ParamLayout {
        ParamLayout::new(3, 1).unwrap()
    }

    #[test]
    fn sizes() {
        let f = VoxelField::new([2, 2, 2], unit_bounds(), layout()).unwrap();
        assert_eq!(f.num_voxels(), 8);
        assert_eq!(f.params().len(), 8 * f.stride());
        assert_eq!(layout().stride(), 5 + 48 + 36);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(VoxelField::new([1, 4, 4], unit_bounds(), layout()).is_err());
        assert!(Bounds::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
        assert!(ParamLayout::new(3, 3).is_err());
    }

    #[test]
    fn deterministic_init() {
        let a = VoxelField::new([3, 3, 3], unit_bounds(), layout()).unwrap();
        let b = VoxelField::new([3, 3, 3], unit_bounds(), layout()).unwrap();
        assert_eq!(a, b);
        let v = a.voxel(5);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[4], 2.0);
    }

    #[test]
    fn interpolation_at_centers_and_midpoints() {
        let mut f = VoxelField::new([3, 3, 3], unit_bounds(), layout()).unwrap();
        for i in 0..f.num_voxels() {
            f.voxel_mut(i)[0] = i as f32;
        }
        let c = f.voxel_center(1, 2, 1);
        let raw = f.sample_field(c).unwrap();
        assert_eq!(raw[0], f.index(1, 2, 1) as f64);

        let mut g = VoxelField::new([2, 2, 2], unit_bounds(), layout()).unwrap();
        for i in 0..8 {
            g.voxel_mut(i)[0] = 0.0;
        }
        g.voxel_mut(1)[0] = 1.0;
        let mid = (g.voxel_center(0, 0, 0) + g.voxel_center(1, 0, 0)) * 0.5;
        assert!((g.sample_field(mid).unwrap()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn outside_is_vacuum() {
        let f = VoxelField::new([2, 2, 2], unit_bounds(), layout()).unwrap();
        let d = Direction::new(0.0, 0.0, 1.0).unwrap();
        let s = f.eval_radiance(Vec3::new(1.5, 0.5, 0.5), d);
        assert_eq!(s.sigma0, 0.0);
        assert_eq!(s.c_final, [0.0; 3]);
        assert!(f.sample_field(Vec3::new(-0.01, 0.5, 0.5)).is_none());
    }

    #[test]
    fn gamma_extremes() {
        let mut f = VoxelField::new([2, 2, 2], unit_bounds(), layout()).unwrap();
        let vd = f.layout().sh_vd();
        for i in 0..8 {
            let v = f.voxel_mut(i);
            v[1] = 1.0;
            v[vd] = 0.4;
            v[4] = 60.0;
        }
        let d = Direction::new(0.0, 0.6, 0.8).unwrap();
        let p = Vec3::new(0.3, 0.3, 0.3);
        let s = f.eval_radiance(p, d);
        assert_eq!(s.gamma, 1.0);
        assert_eq!(s.c_final, s.c_vi);
        for i in 0..8 {
            f.voxel_mut(i)[4] = -800.0;
        }
        let s = f.eval_radiance(p, d);
        assert_eq!(s.gamma, 0.0);
        assert_eq!(s.c_final, s.c_vd);
    }

    #[test]
    fn dc_only_c0_is_direction_independent() {
        let mut f = VoxelField::new([2, 2, 2], unit_bounds(), layout()).unwrap();
        let k0 = [1.2f32, 2.0, 5.0];
        for i in 0..8 {
            f.voxel_mut(i)[5..8].copy_from_slice(&k0);
        }
        let p = Vec3::new(0.4, 0.5, 0.6);
        let dirs = crate::sh::sample_directions(20).unwrap();
        for d in dirs.iter() {
            let s = f.eval_radiance(p, d);
            for ch in 0..3 {
                let expect = (k0[ch] as f64 * crate::sh::Y00).clamp(0.0, 1.0);
                assert!((s.c0[ch] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn slab_intersection() {
        let b = unit_bounds();
        let (t0, t1) = b.intersect(Vec3::new(-1.0, 0.5, 0.5), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((t0 - 1.0).abs() < 1e-12 && (t1 - 2.0).abs() < 1e-12);
        assert!(b.intersect(Vec3::new(-1.0, 2.0, 0.5), Vec3::new(1.0, 0.0, 0.0)).is_none());
    }
}
