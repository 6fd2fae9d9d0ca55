//! Image fidelity metrics and the floater-volume diagnostic.

use crate::error::{Error, Result};
use crate::field::VoxelField;
use crate::image::Image;
use crate::scenes::SceneOracle;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_shape(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).powi(2)))
        .sum();
    Ok(sum / (3 * a.pixels().len()) as f64)
}

/// Peak signal-to-noise ratio at unit peak; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

pub fn mae(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .sum();
    Ok(sum / (3 * a.pixels().len()) as f64)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over valid
/// window positions and the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shape(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let g = gaussian_window();
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..3 {
        for oy in 0..oh {
            for ox in 0..ow {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, gy) in g.iter().enumerate() {
                    for (i, gx) in g.iter().enumerate() {
                        let wgt = gx * gy;
                        let x = a.get(ox + i, oy + j)[ch];
                        let y = b.get(ox + i, oy + j)[ch];
                        mx += wgt * x;
                        my += wgt * y;
                        xx += wgt * x * x;
                        yy += wgt * y * y;
                        xy += wgt * x * y;
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            }
        }
    }
    Ok(total / (3 * ow * oh) as f64)
}

/// Fraction of lattice points whose activated density exceeds `density_thres` while
/// lying outside every sphere grown by one voxel diagonal.
pub fn floater_volume(field: &VoxelField, scene: &SceneOracle, density_thres: f64) -> f64 {
    let diag = field.spacing().norm();
    let stride = field.stride();
    let params = field.params();
    let count = (0..field.num_voxels())
        .filter(|&i| {
            let sigma = (params[i * stride] as f64).max(0.0);
            sigma > density_thres && {
                let c = field.voxel_center_flat(i);
                scene
                    .spec()
                    .spheres
                    .iter()
                    .all(|s| (c - s.center_vec()).norm() > s.radius + diag)
            }
        })
        .count();
    count as f64 / field.num_voxels() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(v: f64) -> Image {
        Image::filled(16, 12, [v; 3])
    }

    #[test]
    fn psnr_closed_forms() {
        assert_eq!(psnr(&uniform(0.3), &uniform(0.3)).unwrap(), f64::INFINITY);
        assert!((psnr(&uniform(0.0), &uniform(0.5)).unwrap() - 6.0206).abs() < 1e-4);
        assert!((psnr(&uniform(0.0), &uniform(0.1)).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&uniform(0.0), &Image::filled(3, 3, [0.0; 3])).is_err());
    }

    #[test]
    fn mae_closed_forms() {
        assert_eq!(mae(&uniform(0.4), &uniform(0.4)).unwrap(), 0.0);
        assert_eq!(mae(&uniform(0.0), &uniform(0.5)).unwrap(), 0.5);
        let a = uniform(0.3);
        let mut px = a.pixels().to_vec();
        for p in px.iter_mut().take(96) {
            *p = [0.5; 3];
        }
        let b = Image::new(16, 12, px).unwrap();
        assert!((mae(&a, &b).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ssim_closed_forms() {
        let a = Image::new(12, 12, (0..144).map(|i| [(i % 7) as f64 / 7.0, 0.2, (i % 5) as f64 / 5.0]).collect()).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let s = ssim(&uniform(0.0), &uniform(1.0)).unwrap();
        assert!((s - SSIM_C1 / (1.0 + SSIM_C1)).abs() < 1e-7);
        assert!((s - 9.999e-5).abs() < 1e-7);
        let b = uniform(0.5);
        let c = Image::new(16, 12, (0..192).map(|i| [((i * 13) % 17) as f64 / 17.0; 3]).collect()).unwrap();
        assert_eq!(ssim(&b, &c).unwrap(), ssim(&c, &b).unwrap());
        assert!(ssim(&Image::filled(10, 20, [0.0; 3]), &Image::filled(10, 20, [0.0; 3])).is_err());
    }
}
