use cleanfield::correction::CorrectionParams;
use cleanfield::field::{Bounds, ParamLayout, VoxelField};
use cleanfield::render::{render_image, RenderMode, RenderOptions};
use cleanfield::{composite, render_ray, Camera, Direction, Ray, Vec3};
use proptest::prelude::*;

mod common;

fn logit(p: f64) -> f32 {
    (p / (1.0 - p)).ln() as f32
}

/// A 17³ field over the unit cube with γ ≈ 1 and a constant view-independent color.
/// Density is set per lattice point by `density(x)`.
fn field_with(density: impl Fn(Vec3) -> f32, color: impl Fn(Vec3) -> [f64; 3]) -> VoxelField {
    let layout = ParamLayout::new(3, 1).unwrap();
    let mut f = VoxelField::zeroed([17; 3], Bounds::cube(Vec3::ZERO, 0.5).unwrap(), layout).unwrap();
    for i in 0..f.num_voxels() {
        let p = f.voxel_center_flat(i);
        let c = color(p);
        let v = f.voxel_mut(i);
        v[ParamLayout::DENSITY] = density(p);
        for ch in 0..3 {
            v[ParamLayout::C_VI + ch] = logit(c[ch]);
        }
        v[ParamLayout::GAMMA] = 30.0;
    }
    f
}

fn x_ray() -> Ray {
    let d = Direction::new(1.0, 0.0, 0.0).unwrap();
    Ray::new(Vec3::new(-2.0, 0.013, -0.021), d, 1.5, 2.5).unwrap()
}

fn opts(correction: Option<CorrectionParams>) -> RenderOptions {
    RenderOptions { correction, ..RenderOptions::default() }
}

proptest! {
    #[test]
    fn composite_invariants(
        sigma in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..50.0], 1..64),
        dt in 0.001f64..0.2,
    ) {
        let k = sigma.len();
        let colors: Vec<[f64; 3]> = (0..k).map(|i| [(i % 3) as f64 / 2.0, 1.0, 0.0]).collect();
        let c = composite(&sigma, &colors, &vec![dt; k]).unwrap();
        prop_assert!(c.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        prop_assert!(c.weights.iter().sum::<f64>() <= 1.0 + 1e-6);
        prop_assert!(c.transmittance.windows(2).all(|t| t[1] <= t[0]));
        // total opacity agrees with the accumulated optical depth
        let opacity = 1.0 - (-sigma.iter().sum::<f64>() * dt).exp();
        prop_assert!((c.weights.iter().sum::<f64>() - opacity).abs() < 1e-9);
        prop_assert!((c.color[1] - opacity).abs() < 1e-9);
    }
}

#[test]
fn constant_medium_matches_beer_lambert() {
    let f = field_with(|_| 2.0, |_| [0.6, 0.3, 0.1]);
    let est = render_ray(&f, &x_ray(), &opts(Some(CorrectionParams::default()))).unwrap();
    let gamma = 1.0 / (1.0 + (-30f64).exp());
    for (ch, c) in [0.6, 0.3, 0.1].into_iter().enumerate() {
        let cvi = 1.0 / (1.0 + (-(logit(c) as f64)).exp());
        let want = gamma * cvi * (1.0 - (-2.0f64).exp());
        assert!((est.c_final[ch] - want).abs() < 1e-9, "{} vs {want}", est.c_final[ch]);
    }
}

#[test]
fn opaque_slab_is_invariant_under_correction() {
    let f = field_with(|p| if (0.0..=0.25).contains(&p.x) { 200.0 } else { 0.0 }, |_| [0.8, 0.5, 0.2]);
    let on = render_ray(&f, &x_ray(), &opts(Some(CorrectionParams::default()))).unwrap();
    let off = render_ray(&f, &x_ray(), &opts(None)).unwrap();
    for ch in 0..3 {
        assert!((on.c_final[ch] - off.c_final[ch]).abs() < 1e-9);
    }
    assert!((on.c_final[0] - 0.8).abs() < 1e-3);
}

#[test]
fn front_blob_becomes_the_front_peak() {
    let density = |p: Vec3| {
        if (0.0..=0.25).contains(&p.x) || (-0.32..=-0.28).contains(&p.x) {
            200.0
        } else {
            0.0
        }
    };
    let color = |p: Vec3| if p.x < -0.1 { [0.1, 0.2, 0.9] } else { [0.8, 0.5, 0.2] };
    let f = field_with(density, color);
    let on = render_ray(&f, &x_ray(), &opts(Some(CorrectionParams::default()))).unwrap();
    let off = render_ray(&f, &x_ray(), &opts(None)).unwrap();
    for ch in 0..3 {
        assert!((on.c_final[ch] - off.c_final[ch]).abs() < 1e-9);
    }
    // the blob sits in front and is dense enough to dominate
    assert!(on.c_final[2] > on.c_final[0]);
}

#[test]
fn correction_removes_haze_in_front_of_the_surface() {
    let density = |p: Vec3| {
        if (-0.1..=0.1).contains(&p.x) {
            200.0
        } else if (-0.45..=-0.35).contains(&p.x) {
            5.0
        } else {
            0.0
        }
    };
    let f = field_with(density, |_| [0.5; 3]);
    let on = render_ray(&f, &x_ray(), &opts(Some(CorrectionParams::absolute(15.0, 2)))).unwrap();
    let off = render_ray(&f, &x_ray(), &opts(None)).unwrap();
    // samples k < 16 lie at x < -0.25
    let head = |w: &[f64]| w[..16].iter().sum::<f64>();
    assert_eq!(head(&on.weights), 0.0);
    assert!(head(&off.weights) > 0.05);
}

#[test]
fn vi_only_matches_full_when_gamma_is_near_one() {
    let mut f = common::random_field(9, 3, 1, 5);
    let stride = f.stride();
    for v in f.params_mut().chunks_exact_mut(stride) {
        v[ParamLayout::GAMMA] = 10.0;
    }
    let cam = Camera::look_at(Vec3::new(1.6, 0.7, 0.5), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 16, 16, 20.0).unwrap();
    let full = render_image(&f, &cam, &RenderOptions::default()).unwrap();
    let vi = render_image(&f, &cam, &RenderOptions { mode: RenderMode::ViOnly, ..RenderOptions::default() }).unwrap();
    let diff = full
        .pixels()
        .iter()
        .zip(vi.pixels())
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
        .fold(0.0, f64::max);
    assert!(diff <= 0.02, "max diff {diff}");
}

#[test]
fn renders_are_bit_reproducible() {
    let f = common::random_field(6, 3, 1, 2);
    let cam = Camera::look_at(Vec3::new(0.0, -1.8, 0.4), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 12, 10, 14.0).unwrap();
    let o = RenderOptions { stratified: true, seed: 9, ..RenderOptions::default() };
    let a = render_image(&f, &cam, &o).unwrap();
    let b = render_image(&f, &cam, &o).unwrap();
    assert_eq!(a.to_ppm(), b.to_ppm());
}
