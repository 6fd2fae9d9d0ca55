//! Before/after density line charts, rasterized to an [`Image`].

use crate::image::Image;
use crate::render::DensityProfile;

const PANEL_W: usize = 480;
const PANEL_H: usize = 160;
const PAD: usize = 12;
const MAX_PANELS: usize = 8;

pub const BEFORE_COLOR: [f64; 3] = [0.85, 0.2, 0.15];
pub const AFTER_COLOR: [f64; 3] = [0.1, 0.35, 0.85];
const AXIS_COLOR: [f64; 3] = [0.3, 0.3, 0.3];

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: [f64; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    fn line(&mut self, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: [f64; 3]) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let a = s as f64 / steps as f64;
            self.put((x0 + a * (x1 - x0)).round() as i64, (y0 + a * (y1 - y0)).round() as i64, c);
        }
    }
}

/// One panel per profile pair (at most eight), the original curve drawn first and
/// the corrected one over it. Both curves in a panel share the vertical scale.
pub fn plot_profiles(pairs: &[(DensityProfile, DensityProfile)]) -> Image {
    let panels = pairs.len().clamp(1, MAX_PANELS);
    let mut canvas = Canvas {
        width: PANEL_W,
        height: panels * PANEL_H,
        pixels: vec![[1.0; 3]; PANEL_W * panels * PANEL_H],
    };
    for (p, (before, after)) in pairs.iter().take(MAX_PANELS).enumerate() {
        let top = (p * PANEL_H + PAD) as f64;
        let bottom = ((p + 1) * PANEL_H - PAD) as f64;
        let (left, right) = (PAD as f64, (PANEL_W - PAD) as f64);
        canvas.line((left, bottom), (right, bottom), AXIS_COLOR);
        canvas.line((left, top), (left, bottom), AXIS_COLOR);
        if before.is_empty() {
            continue;
        }
        let t0 = before.t[0];
        let t1 = *before.t.last().unwrap();
        let peak = before.sigma.iter().chain(&after.sigma).fold(0.0f64, |m, &s| m.max(s));
        let x = |t: f64| if t1 > t0 { left + (t - t0) / (t1 - t0) * (right - left) } else { left };
        let y = |s: f64| if peak > 0.0 { bottom - s / peak * (bottom - top) } else { bottom };
        for (profile, color) in [(before, BEFORE_COLOR), (after, AFTER_COLOR)] {
            for k in 1..profile.len() {
                canvas.line(
                    (x(profile.t[k - 1]), y(profile.sigma[k - 1])),
                    (x(profile.t[k]), y(profile.sigma[k])),
                    color,
                );
            }
        }
    }
    Image::new(canvas.width, canvas.height, canvas.pixels).expect("canvas size matches pixel count")
}
