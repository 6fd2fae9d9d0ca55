//! Real spherical harmonics: basis evaluation, quasi-uniform direction sets,
//! least-squares coefficient fits and the low/high degree split that produces
//! view-independent and view-dependent color targets.
//!
//! Convention: orthonormal real basis without the Condon-Shortley phase, ordered
//! `(0,0), (1,-1), (1,0), (1,1), (2,-2), ...`. Degrees up to 4 are supported.

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::vec3::Vec3;

pub const MAX_DEGREE: usize = 4;

/// Tolerance on `|‖d‖ - 1|` accepted by [`Direction::new`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Y₀⁰ = 1 / (2√π).
pub const Y00: f64 = 0.282_094_791_773_878_14;

/// A unit vector on S².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction(Vec3);

impl Direction {
    /// Accepts vectors within [`UNIT_TOLERANCE`] of unit length and renormalizes them.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vec3::new(x, y, z);
        let n = v.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!(
                "direction ({x}, {y}, {z}) has norm {n}, expected 1"
            )));
        }
        Ok(Direction(v * (1.0 / n)))
    }

    /// Normalizes any non-zero finite vector.
    pub fn from_vector(v: Vec3) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid(format!("cannot normalize {v:?}")));
        }
        Ok(Direction(v * (1.0 / n)))
    }

    pub fn vec(self) -> Vec3 {
        self.0
    }

    pub fn x(self) -> f64 {
        self.0.x
    }
    pub fn y(self) -> f64 {
        self.0.y
    }
    pub fn z(self) -> f64 {
        self.0.z
    }
}

/// Deterministic ordered set of sampling directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    directions: Vec<Direction>,
}

impl DirectionSet {
    /// Fibonacci sphere with `n` points: equal-area latitude bands, golden-angle azimuths.
    pub fn fibonacci(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("direction set needs at least one direction"));
        }
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let directions = (0..n)
            .map(|i| {
                let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                Direction(Vec3::new(r * phi.cos(), r * phi.sin(), z).normalized())
            })
            .collect();
        Ok(DirectionSet { directions })
    }

    pub fn from_directions(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("direction set needs at least one direction"));
        }
        Ok(DirectionSet { directions })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Direction> + '_ {
        self.directions.iter().copied()
    }

    pub fn as_slice(&self) -> &[Direction] {
        &self.directions
    }
}

/// Convenience wrapper for [`DirectionSet::fibonacci`].
pub fn sample_directions(n: usize) -> Result<DirectionSet> {
    DirectionSet::fibonacci(n)
}

/// Number of basis functions with degree `<= l_max`.
pub const fn basis_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// SH values `y(d)` up to a degree cap.
#[derive(Debug, Clone, PartialEq)]
pub struct ShBasisVector {
    pub values: Vec<f64>,
    pub l_max: usize,
}

pub fn eval_sh_basis(d: Direction, l_max: usize) -> Result<ShBasisVector> {
    if l_max > MAX_DEGREE {
        return Err(Error::invalid(format!(
            "l_max {l_max} exceeds supported maximum {MAX_DEGREE}"
        )));
    }
    let mut values = vec![0.0; basis_len(l_max)];
    eval_basis_into(d.vec(), l_max, &mut values);
    Ok(ShBasisVector { values, l_max })
}

/// Unchecked evaluation for hot loops. `d` must be unit length, `out.len() >= basis_len(l_max)`.
#[inline]
pub fn eval_basis_into(d: Vec3, l_max: usize, out: &mut [f64]) {
    let (x, y, z) = (d.x, d.y, d.z);
    out[0] = Y00;
    if l_max < 1 {
        return;
    }
    const C1: f64 = 0.488_602_511_902_919_9;
    out[1] = C1 * y;
    out[2] = C1 * z;
    out[3] = C1 * x;
    if l_max < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = 1.092_548_430_592_079_2 * xy;
    out[5] = 1.092_548_430_592_079_2 * yz;
    out[6] = 0.315_391_565_252_520_05 * (3.0 * zz - 1.0);
    out[7] = 1.092_548_430_592_079_2 * xz;
    out[8] = 0.546_274_215_296_039_6 * (xx - yy);
    if l_max < 3 {
        return;
    }
    out[9] = 0.590_043_589_926_643_5 * y * (3.0 * xx - yy);
    out[10] = 2.890_611_442_640_554 * xy * z;
    out[11] = 0.457_045_799_464_465_8 * y * (5.0 * zz - 1.0);
    out[12] = 0.373_176_332_590_115_4 * z * (5.0 * zz - 3.0);
    out[13] = 0.457_045_799_464_465_8 * x * (5.0 * zz - 1.0);
    out[14] = 1.445_305_721_320_277 * z * (xx - yy);
    out[15] = 0.590_043_589_926_643_5 * x * (xx - 3.0 * yy);
    if l_max < 4 {
        return;
    }
    out[16] = 2.503_342_941_796_704_6 * xy * (xx - yy);
    out[17] = 1.770_130_769_779_930_4 * yz * (3.0 * xx - yy);
    out[18] = 0.946_174_695_757_560_1 * xy * (7.0 * zz - 1.0);
    out[19] = 0.669_046_543_557_289_2 * yz * (7.0 * zz - 3.0);
    out[20] = 0.105_785_546_915_204_31 * (35.0 * zz * zz - 30.0 * zz + 3.0);
    out[21] = 0.669_046_543_557_289_2 * xz * (7.0 * zz - 3.0);
    out[22] = 0.473_087_347_878_780_04 * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = 1.770_130_769_779_930_4 * xz * (xx - 3.0 * yy);
    out[24] = 0.625_835_735_449_176_1 * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

/// Least-squares SH coefficients for one color channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ShFit {
    pub coefficients: Vec<f64>,
    pub l_max: usize,
    /// Squared residual `‖s - Y k*‖²`.
    pub residual: f64,
}

impl ShFit {
    pub fn evaluate(&self, d: Direction) -> f64 {
        let mut y = [0.0; basis_len(MAX_DEGREE)];
        eval_basis_into(d.vec(), self.l_max, &mut y);
        dot(&self.coefficients, &y[..self.coefficients.len()])
    }
}

/// Design matrix for a fixed direction set together with its factored normal matrix.
///
/// Fitting many sample vectors against the same directions reuses the factorization.
#[derive(Debug, Clone)]
pub struct ShDesign {
    l_max: usize,
    n: usize,
    /// `n × L` row-major, row i is `y(d_i)ᵀ`.
    rows: Vec<f64>,
    normal: Cholesky,
}

impl ShDesign {
    pub fn new(dirs: &DirectionSet, l_max: usize) -> Result<Self> {
        if l_max > MAX_DEGREE {
            return Err(Error::invalid(format!(
                "l_max {l_max} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        let l = basis_len(l_max);
        let n = dirs.len();
        if n < l {
            return Err(Error::UnderDetermined { samples: n, coefficients: l });
        }
        let mut rows = vec![0.0; n * l];
        for (row, d) in rows.chunks_exact_mut(l).zip(dirs.iter()) {
            eval_basis_into(d.vec(), l_max, row);
        }
        let mut gram = vec![0.0; l * l];
        for row in rows.chunks_exact(l) {
            for i in 0..l {
                for j in 0..=i {
                    gram[i * l + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..l {
            for j in 0..i {
                gram[j * l + i] = gram[i * l + j];
            }
        }
        let normal = Cholesky::factor(&gram, l)?;
        Ok(ShDesign { l_max, n, rows, normal })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn basis_len(&self) -> usize {
        basis_len(self.l_max)
    }

    pub fn num_directions(&self) -> usize {
        self.n
    }

    /// Row `i` of the design matrix, `y(d_i)`.
    pub fn row(&self, i: usize) -> &[f64] {
        let l = self.basis_len();
        &self.rows[i * l..(i + 1) * l]
    }

    /// Solve the normal equations `(YᵀY) k = Yᵀ s`.
    pub fn fit(&self, samples: &[f64]) -> Result<ShFit> {
        if samples.len() != self.n {
            return Err(Error::invalid(format!(
                "{} samples for {} directions",
                samples.len(),
                self.n
            )));
        }
        let l = self.basis_len();
        let mut k = vec![0.0; l];
        for (row, &s) in self.rows.chunks_exact(l).zip(samples) {
            for (kj, yj) in k.iter_mut().zip(row) {
                *kj += yj * s;
            }
        }
        self.normal.solve_in_place(&mut k);
        let residual = self
            .rows
            .chunks_exact(l)
            .zip(samples)
            .map(|(row, &s)| {
                let r = s - dot(row, &k);
                r * r
            })
            .sum();
        Ok(ShFit { coefficients: k, l_max: self.l_max, residual })
    }

    /// Row-major `L × n` matrix `(YᵀY)⁻¹ Yᵀ`, mapping samples straight to coefficients.
    pub fn projection(&self) -> Vec<f64> {
        let l = self.basis_len();
        let mut p = vec![0.0; l * self.n];
        let mut col = vec![0.0; l];
        for i in 0..self.n {
            col.copy_from_slice(self.row(i));
            self.normal.solve_in_place(&mut col);
            for j in 0..l {
                p[j * self.n + i] = col[j];
            }
        }
        p
    }
}

/// Fit one channel of samples `s` taken at `dirs`.
pub fn fit_sh(samples: &[f64], dirs: &DirectionSet, l_max: usize) -> Result<ShFit> {
    ShDesign::new(dirs, l_max)?.fit(samples)
}

/// Supervision targets for the two appearance branches.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionTargets {
    pub c_vi_target: [f64; 3],
    /// One RGB triple per direction of the set used for the split.
    pub c_vd_target: Vec<[f64; 3]>,
}

/// Mean over `dirs` of each basis function, `ȳ_j = (1/N) Σ_i y_j(d_i)`.
pub fn basis_means(dirs: &DirectionSet, l_max: usize) -> Vec<f64> {
    let l = basis_len(l_max);
    let mut mean = vec![0.0; l];
    let mut y = [0.0; basis_len(MAX_DEGREE)];
    for d in dirs.iter() {
        eval_basis_into(d.vec(), l_max, &mut y);
        for (m, v) in mean.iter_mut().zip(&y[..l]) {
            *m += v;
        }
    }
    let inv = 1.0 / dirs.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    mean
}

pub(crate) fn check_split(split_degree: usize, l_max: usize) -> Result<()> {
    if split_degree >= l_max {
        return Err(Error::InvalidSplit { split_degree, l_max });
    }
    Ok(())
}

/// Split per-channel fits at `split_degree`.
///
/// The view-independent target is the direction-set mean of the reconstruction from
/// degrees `<= split_degree`; the view-dependent target is the reconstruction from
/// degrees `> split_degree` evaluated at each direction.
pub fn split_targets(
    fits: &[ShFit; 3],
    dirs: &DirectionSet,
    split_degree: usize,
) -> Result<DecompositionTargets> {
    let l_max = fits[0].l_max;
    if fits.iter().any(|f| f.l_max != l_max || f.coefficients.len() != basis_len(l_max)) {
        return Err(Error::invalid("channel fits disagree on degree"));
    }
    check_split(split_degree, l_max)?;
    let low = basis_len(split_degree);
    let l = basis_len(l_max);
    let means = basis_means(dirs, split_degree);

    let mut c_vi_target = [0.0; 3];
    for (ch, fit) in fits.iter().enumerate() {
        c_vi_target[ch] = dot(&fit.coefficients[..low], &means);
    }

    let mut y = [0.0; basis_len(MAX_DEGREE)];
    let c_vd_target = dirs
        .iter()
        .map(|d| {
            eval_basis_into(d.vec(), l_max, &mut y);
            let mut c = [0.0; 3];
            for (ch, fit) in fits.iter().enumerate() {
                c[ch] = dot(&fit.coefficients[low..l], &y[low..l]);
            }
            c
        })
        .collect();
    Ok(DecompositionTargets { c_vi_target, c_vd_target })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
