//! Deterministic synthetic test pictures.
//!
//! Piecewise-smooth content: a shaded background with ellipses, rotated
//! rectangles, thin lines, a striped patch and mild sensor noise. Smooth
//! areas favour low-resolution coding while edges and stripes do not.

use crate::frame::Frame;
use crate::training::frame_from_rgb;
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, cos: f64, sin: f64 },
    Line { x0: f64, y0: f64, dx: f64, dy: f64, len: f64, half_width: f64 },
    Stripes { cx: f64, cy: f64, r: f64, period: f64, cos: f64, sin: f64 },
}

impl Shape {
    /// Coverage in [0, 1] of pixel centre `(x, y)`; stripes return a blend weight.
    fn cover(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let d = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2);
                (d <= 1.0) as u8 as f64
            }
            Shape::Rect { cx, cy, hw, hh, cos, sin } => {
                let (u, v) = ((x - cx) * cos + (y - cy) * sin, (cx - x) * sin + (y - cy) * cos);
                (u.abs() <= hw && v.abs() <= hh) as u8 as f64
            }
            Shape::Line { x0, y0, dx, dy, len, half_width } => {
                let (px, py) = (x - x0, y - y0);
                let t = px * dx + py * dy;
                let d = (px * dy - py * dx).abs();
                (t >= 0.0 && t <= len && d <= half_width) as u8 as f64
            }
            Shape::Stripes { cx, cy, r, period, cos, sin } => {
                if (x - cx).abs() > r || (y - cy).abs() > r {
                    return 0.0;
                }
                let u = (x - cx) * cos + (y - cy) * sin;
                0.5 + 0.5 * (std::f64::consts::TAU * u / period).sin()
            }
        }
    }
}

fn colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)]
}

/// An RGB picture determined entirely by `(w, h, seed)`.
pub fn rgb_image(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fw, fh) = (w as f64, h as f64);
    let base = colour(&mut rng);
    let grad: Vec<[f64; 2]> = (0..3)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let wave_period = rng.gen_range(40.0..160.0);
    let wave_amp = rng.gen_range(0.0..30.0);

    let mut shapes: Vec<(Shape, [f64; 3])> = Vec::new();
    for _ in 0..rng.gen_range(3..9) {
        let cx = rng.gen_range(0.0..fw);
        let cy = rng.gen_range(0.0..fh);
        let s = if rng.gen_bool(0.5) {
            Shape::Ellipse {
                cx,
                cy,
                rx: rng.gen_range(6.0..fw.max(12.0) / 2.5),
                ry: rng.gen_range(6.0..fh.max(12.0) / 2.5),
            }
        } else {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            Shape::Rect {
                cx,
                cy,
                hw: rng.gen_range(4.0..fw.max(10.0) / 3.0),
                hh: rng.gen_range(4.0..fh.max(10.0) / 3.0),
                cos: a.cos(),
                sin: a.sin(),
            }
        };
        shapes.push((s, colour(&mut rng)));
    }
    for _ in 0..rng.gen_range(1..5) {
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        shapes.push((
            Shape::Line {
                x0: rng.gen_range(0.0..fw),
                y0: rng.gen_range(0.0..fh),
                dx: a.cos(),
                dy: a.sin(),
                len: rng.gen_range(10.0..(fw + fh) / 2.0),
                half_width: rng.gen_range(0.5..2.0),
            },
            colour(&mut rng),
        ));
    }
    if rng.gen_bool(0.7) {
        let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        shapes.push((
            Shape::Stripes {
                cx: rng.gen_range(0.0..fw),
                cy: rng.gen_range(0.0..fh),
                r: rng.gen_range(8.0..fw.min(fh).max(16.0) / 3.0),
                period: rng.gen_range(5.0..16.0),
                cos: a.cos(),
                sin: a.sin(),
            },
            colour(&mut rng),
        ));
    }

    let noise = Normal::new(0.0, rng.gen_range(0.5..3.0)).expect("positive std");
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let wave = wave_amp * (xf / wave_period).sin() * (yf / (wave_period * 0.7)).cos();
            let mut px = [0.0; 3];
            for k in 0..3 {
                px[k] = base[k] + grad[k][0] * xf * 96.0 / fw + grad[k][1] * yf * 96.0 / fh + wave;
            }
            for (s, c) in &shapes {
                let a = s.cover(xf, yf);
                if a > 0.0 {
                    for k in 0..3 {
                        px[k] = px[k] * (1.0 - a) + c[k] * a;
                    }
                }
            }
            let n = noise.sample(&mut rng);
            img.put_pixel(x, y, Rgb(px.map(|v| (v + n).round().clamp(0.0, 255.0) as u8)));
        }
    }
    img
}

/// [`rgb_image`] converted to a padded 4:2:0 frame.
pub fn frame(w: usize, h: usize, seed: u64) -> Frame {
    frame_from_rgb(&rgb_image(w as u32, h as u32, seed)).expect("nonzero dimensions")
}
