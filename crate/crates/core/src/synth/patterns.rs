//! Procedural clean images: a colour gradient, a few flat shapes and a
//! smooth value-noise texture. Coordinates are normalized so the same seed
//! gives the same scene at any resolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::Image;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Disk { cy: f64, cx: f64, r: f64 },
    Stripes { freq: f64, phase: f64, angle: f64 },
}

impl Shape {
    fn covers(&self, v: f64, u: f64) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => v >= y0 && v < y1 && u >= x0 && u < x1,
            Shape::Disk { cy, cx, r } => (v - cy).powi(2) + (u - cx).powi(2) <= r * r,
            Shape::Stripes { freq, phase, angle } => {
                let t = v * angle.cos() + u * angle.sin();
                ((t * freq + phase).fract() + 1.0).fract() < 0.5
            }
        }
    }
}

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)]
}

const LATTICE: usize = 5;

pub fn procedural_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = color(&mut rng);
    let c1 = color(&mut rng);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (ga, gb) = (angle.cos(), angle.sin());

    let n_shapes = rng.random_range(2..=4);
    let shapes: Vec<(Shape, [f64; 3], f64)> = (0..n_shapes)
        .map(|_| {
            let shape = match rng.random_range(0..3) {
                0 => {
                    let (y0, x0) = (rng.random_range(0.0..0.7), rng.random_range(0.0..0.7));
                    Shape::Rect { y0, x0, y1: y0 + rng.random_range(0.15..0.5), x1: x0 + rng.random_range(0.15..0.5) }
                }
                1 => Shape::Disk {
                    cy: rng.random_range(0.1..0.9),
                    cx: rng.random_range(0.1..0.9),
                    r: rng.random_range(0.08..0.3),
                },
                _ => Shape::Stripes {
                    freq: rng.random_range(2.0..6.0),
                    phase: rng.random_range(0.0..1.0),
                    angle: rng.random_range(0.0..std::f64::consts::PI),
                },
            };
            let alpha = if matches!(shape, Shape::Stripes { .. }) { 0.35 } else { 1.0 };
            (shape, color(&mut rng), alpha)
        })
        .collect();

    let amp = rng.random_range(0.03..0.12);
    let lattice: Vec<f64> = (0..LATTICE * LATTICE).map(|_| rng.random_range(-1.0..1.0)).collect();
    let texture = |v: f64, u: f64| {
        let (fy, fx) = (v * (LATTICE - 1) as f64, u * (LATTICE - 1) as f64);
        let (iy, ix) = ((fy as usize).min(LATTICE - 2), (fx as usize).min(LATTICE - 2));
        let (ty, tx) = (fy - iy as f64, fx - ix as f64);
        let at = |y: usize, x: usize| lattice[y * LATTICE + x];
        let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
        let bot = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
        top * (1.0 - ty) + bot * ty
    };

    let mut img = Image::from_fn(height, width, |_, _, _| 0.0);
    let data = img.data_mut();
    for y in 0..height {
        let v = (y as f64 + 0.5) / height as f64;
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64;
            let t = (((v - 0.5) * ga + (u - 0.5) * gb) + 0.75) / 1.5;
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = c0[c] * (1.0 - t) + c1[c] * t;
            }
            for (shape, col, alpha) in &shapes {
                if shape.covers(v, u) {
                    for c in 0..3 {
                        px[c] = px[c] * (1.0 - alpha) + col[c] * alpha;
                    }
                }
            }
            let n = amp * texture(v, u);
            for c in 0..3 {
                data[(y * width + x) * 3 + c] = (px[c] + n).clamp(0.0, 1.0);
            }
        }
    }
    img
}
