//! Procedural sharp scenes.
//!
//! A scene is a linear colour gradient, plus band-limited value noise,
//! under a stack of anti-aliased ellipses and convex polygons. Coverage
//! comes from a signed distance clamped to one pixel, so edges are sharp
//! but not aliased.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const MIN_SIDE: usize = 64;

type Rgb = [f64; 3];

fn color(rng: &mut ChaCha8Rng) -> Rgb {
    [rng.gen(), rng.gen(), rng.gen()]
}

enum Shape2 {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, cos: f64, sin: f64 },
    /// Convex polygon as inward-facing edge lines `(nx, ny, c)` with
    /// signed distance `nx·x + ny·y + c` (negative inside).
    Polygon { edges: Vec<(f64, f64, f64)> },
}

impl Shape2 {
    fn random(rng: &mut ChaCha8Rng, h: f64, w: f64) -> Self {
        let cx = rng.gen_range(0.0..w);
        let cy = rng.gen_range(0.0..h);
        let scale = h.min(w);
        if rng.gen_bool(0.5) {
            let a: f64 = rng.gen_range(0.0..TAU);
            Shape2::Ellipse {
                cx,
                cy,
                rx: rng.gen_range(0.04..0.25) * scale,
                ry: rng.gen_range(0.04..0.25) * scale,
                cos: a.cos(),
                sin: a.sin(),
            }
        } else {
            let n = rng.gen_range(3..7);
            let r = rng.gen_range(0.05..0.3) * scale;
            let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let pts: Vec<(f64, f64)> = angles
                .iter()
                .map(|a| {
                    let rr = r * rng.gen_range(0.6..1.0);
                    (cx + rr * a.cos(), cy + rr * a.sin())
                })
                .collect();
            let edges = (0..n)
                .filter_map(|i| {
                    let (x0, y0) = pts[i];
                    let (x1, y1) = pts[(i + 1) % n];
                    let (dx, dy) = (x1 - x0, y1 - y0);
                    let len = (dx * dx + dy * dy).sqrt();
                    // counter-clockwise order: outward normal is (dy, −dx)
                    (len > 1e-9).then(|| {
                        let (nx, ny) = (dy / len, -dx / len);
                        (nx, ny, -(nx * x0 + ny * y0))
                    })
                })
                .collect();
            Shape2::Polygon { edges }
        }
    }

    /// Approximate signed distance in pixels, negative inside.
    fn distance(&self, x: f64, y: f64) -> f64 {
        match self {
            Shape2::Ellipse { cx, cy, rx, ry, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                let u = (dx * cos + dy * sin) / rx;
                let v = (-dx * sin + dy * cos) / ry;
                ((u * u + v * v).sqrt() - 1.0) * rx.min(*ry)
            }
            Shape2::Polygon { edges } => edges
                .iter()
                .map(|(nx, ny, c)| nx * x + ny * y + c)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Smooth value noise on a coarse lattice, bilinearly interpolated.
fn value_noise(rng: &mut ChaCha8Rng, h: usize, w: usize, cell: f64) -> Vec<f64> {
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let fy = y as f64 / cell;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..w {
            let fx = x as f64 / cell;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bot = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out[y * w + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// A deterministic `[1, 3, h, w]` scene with values in `[0, 1]`.
pub fn gen_scene(seed: u64, h: usize, w: usize) -> Result<Tensor> {
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::Invalid(format!(
            "scenes must be at least {MIN_SIDE}×{MIN_SIDE}, got {h}×{w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c0, c1) = (color(&mut rng), color(&mut rng));
    let a: f64 = rng.gen_range(0.0..TAU);
    let (gx, gy) = (a.cos(), a.sin());
    let span = (h as f64 * gy.abs() + w as f64 * gx.abs()).max(1.0);

    let mut img = vec![[0.0f64; 3]; h * w];
    for y in 0..h {
        for x in 0..w {
            let t = ((x as f64 - w as f64 / 2.0) * gx + (y as f64 - h as f64 / 2.0) * gy) / span + 0.5;
            let t = t.clamp(0.0, 1.0);
            for (c, v) in img[y * w + x].iter_mut().enumerate() {
                *v = c0[c] * (1.0 - t) + c1[c] * t;
            }
        }
    }

    let tint = color(&mut rng);
    let cell = rng.gen_range(6.0..16.0);
    let noise = value_noise(&mut rng, h, w, cell);
    let fine = value_noise(&mut rng, h, w, 2.5);
    for (i, px) in img.iter_mut().enumerate() {
        let n = 0.12 * noise[i] + 0.04 * fine[i];
        for (c, v) in px.iter_mut().enumerate() {
            *v += n * (0.5 + tint[c]);
        }
    }

    let count = rng.gen_range(6..14);
    for _ in 0..count {
        let shape = Shape2::random(&mut rng, h as f64, w as f64);
        let col = color(&mut rng);
        let opacity = rng.gen_range(0.6..1.0);
        for y in 0..h {
            for x in 0..w {
                let d = shape.distance(x as f64 + 0.5, y as f64 + 0.5);
                let cover = (0.5 - d).clamp(0.0, 1.0) * opacity;
                if cover > 0.0 {
                    for (c, v) in img[y * w + x].iter_mut().enumerate() {
                        *v = *v * (1.0 - cover) + col[c] * cover;
                    }
                }
            }
        }
    }

    Ok(Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        img[y * w + x][c].clamp(0.0, 1.0) as f32
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_clipped() {
        let a = gen_scene(7, 128, 128).unwrap();
        assert_eq!(a, gen_scene(7, 128, 128).unwrap());
        assert!(a.min_value() >= 0.0 && a.max_value() <= 1.0);
        assert!(a.max_value() - a.min_value() > 0.2);
    }

    #[test]
    fn too_small_rejected() {
        assert!(gen_scene(0, 63, 128).is_err());
    }
}
