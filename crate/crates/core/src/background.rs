//! Seeded procedural backgrounds.
//!
//! Stand-ins for natural photographs: a handful of flat-shaded occluding
//! shapes with hard edges over a smooth gradient, overlaid with multi-octave
//! value noise so the image has texture at every scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::IntensityFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundStyle {
    /// Number of flat shapes layered over the base gradient.
    pub shapes: (u32, u32),
    /// Amplitude of the octave noise texture.
    pub texture: f32,
    /// Output range after contrast normalization; every value lies inside.
    pub range: (f32, f32),
}

impl Default for BackgroundStyle {
    fn default() -> Self {
        Self {
            shapes: (12, 28),
            texture: 0.22,
            range: (0.04, 0.96),
        }
    }
}

pub fn procedural_background(width: usize, height: usize, seed: u64) -> IntensityFrame {
    procedural_background_with(width, height, seed, &BackgroundStyle::default())
}

pub fn procedural_background_with(
    width: usize,
    height: usize,
    seed: u64,
    style: &BackgroundStyle,
) -> IntensityFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f32, height as f32);

    // base gradient
    let g0: f32 = rng.random_range(0.2..0.8);
    let gx: f32 = rng.random_range(-0.3..0.3);
    let gy: f32 = rng.random_range(-0.3..0.3);
    let mut data: Vec<f32> = (0..height)
        .flat_map(|y| (0..width).map(move |x| g0 + gx * (x as f32 / w - 0.5) + gy * (y as f32 / h - 0.5)))
        .collect();

    let n_shapes = rng.random_range(style.shapes.0..=style.shapes.1.max(style.shapes.0));
    for _ in 0..n_shapes {
        let level: f32 = rng.random_range(0.0..1.0);
        let cx = rng.random_range(0.0..w);
        let cy = rng.random_range(0.0..h);
        let sx = rng.random_range(0.04..0.35) * w;
        let sy = rng.random_range(0.04..0.35) * h;
        let ellipse = rng.random_bool(0.5);
        let angle: f32 = rng.random_range(0.0..std::f32::consts::PI);
        let (sin, cos) = angle.sin_cos();
        let shade: f32 = rng.random_range(-0.15..0.15);
        for y in 0..height {
            for x in 0..width {
                let dx = x as f32 - cx;
                let dy = y as f32 - cy;
                let u = (cos * dx + sin * dy) / sx;
                let v = (-sin * dx + cos * dy) / sy;
                let inside = if ellipse {
                    u * u + v * v < 1.0
                } else {
                    u.abs() < 1.0 && v.abs() < 1.0
                };
                if inside {
                    data[y * width + x] = level + shade * u;
                }
            }
        }
    }

    // octave value noise, amplitude halving with each halving of the cell size
    let mut amplitude = style.texture;
    let mut cell = 96.0f32;
    while cell >= 1.5 {
        let lattice = Lattice::new(width, height, cell, &mut rng);
        for y in 0..height {
            for x in 0..width {
                data[y * width + x] += amplitude * lattice.sample(x as f32, y as f32);
            }
        }
        amplitude *= 0.62;
        cell *= 0.5;
    }

    normalize(&mut data, style.range);
    IntensityFrame::new(width, height, data).expect("dimensions are consistent")
}

/// Random values on a square lattice, smoothly interpolated.
struct Lattice {
    cols: usize,
    cell: f32,
    values: Vec<f32>,
}

impl Lattice {
    fn new(width: usize, height: usize, cell: f32, rng: &mut ChaCha8Rng) -> Self {
        let cols = (width as f32 / cell).ceil() as usize + 2;
        let rows = (height as f32 / cell).ceil() as usize + 2;
        let values = (0..cols * rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { cols, cell, values }
    }

    fn sample(&self, x: f32, y: f32) -> f32 {
        let fx = x / self.cell;
        let fy = y / self.cell;
        let (ix, iy) = (fx as usize, fy as usize);
        let (tx, ty) = (smooth(fx - ix as f32), smooth(fy - iy as f32));
        let at = |c: usize, r: usize| self.values[r * self.cols + c];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Linear stretch of the 1st..99th percentile onto `range`; the tails are
/// clamped into `range`.
fn normalize(data: &mut [f32], range: (f32, f32)) {
    let mut sorted = data.to_vec();
    sorted.sort_by(f32::total_cmp);
    let lo = sorted[sorted.len() / 100];
    let hi = sorted[sorted.len() - 1 - sorted.len() / 100];
    let scale = if hi > lo { (range.1 - range.0) / (hi - lo) } else { 0.0 };
    for v in data.iter_mut() {
        *v = (range.0 + (*v - lo) * scale).clamp(range.0, range.1);
    }
}
