//! Blur kernels and the blur-plus-noise degradation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind {
    /// Line segment of `length` pixels (end to end, counting both end
    /// pixels) at `angle` radians.
    Motion { length: f64, angle: f64 },
    Gaussian { sigma: f64 },
}

/// Normalized, non-negative, odd-sized square taps.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    pub kind: KernelKind,
    pub size: usize,
    pub taps: Vec<f64>,
}

impl BlurKernel {
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn at(&self, dy: isize, dx: isize) -> f64 {
        let r = self.radius() as isize;
        self.taps[((dy + r) * self.size as isize + dx + r) as usize]
    }

    /// Short human-readable description, e.g. for manifests.
    pub fn describe(&self) -> String {
        match self.kind {
            KernelKind::Motion { length, angle } => format!("motion:{length:.3}:{angle:.4}"),
            KernelKind::Gaussian { sigma } => format!("gaussian:{sigma:.3}"),
        }
    }
}

fn segment_distance(px: f64, py: f64, half: f64, (c, s): (f64, f64)) -> f64 {
    // project onto the segment direction, clamp to its extent
    let t = (px * c + py * s).clamp(-half, half);
    let (qx, qy) = (t * c, t * s);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

pub fn make_kernel(kind: KernelKind) -> Result<BlurKernel> {
    let (size, taps) = match kind {
        KernelKind::Motion { length, angle } => {
            if !(length >= 1.0 && length.is_finite() && angle.is_finite()) {
                return Err(Error::Invalid(format!("motion kernel length {length} must be ≥ 1")));
            }
            // the segment joins the centres of its two end pixels
            let half = (length - 1.0) / 2.0;
            let r = half.ceil() as usize + 1;
            let size = 2 * r + 1;
            let dir = (angle.cos(), angle.sin());
            let taps = (0..size * size)
                .map(|i| {
                    let (y, x) = ((i / size) as f64 - r as f64, (i % size) as f64 - r as f64);
                    (1.0 - segment_distance(x, y, half, dir)).max(0.0)
                })
                .collect();
            (size, taps)
        }
        KernelKind::Gaussian { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Invalid(format!("gaussian sigma {sigma} must be > 0")));
            }
            let r = (3.0 * sigma).ceil() as usize;
            let size = 2 * r + 1;
            let taps = (0..size * size)
                .map(|i| {
                    let (y, x) = ((i / size) as f64 - r as f64, (i % size) as f64 - r as f64);
                    (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            (size, taps)
        }
    };
    normalize(kind, size, taps)
}

fn normalize(kind: KernelKind, size: usize, mut taps: Vec<f64>) -> Result<BlurKernel> {
    let total: f64 = taps.iter().sum();
    if !(total > 0.0 && total.is_finite()) || taps.iter().any(|&t| t < 0.0) {
        return Err(Error::Invalid("kernel taps cannot be normalized".into()));
    }
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(BlurKernel { kind, size, taps })
}

/// Correlation with replicate padding, then additive gaussian noise of
/// standard deviation `noise`, then clipping to `[0, 1]`.
pub fn blur(sharp: &Tensor, kernel: &BlurKernel, noise: f64, seed: u64) -> Result<Tensor> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Invalid(format!("noise sigma {noise}")));
    }
    let s = sharp.shape();
    let r = kernel.radius() as isize;
    let (h, w) = (s.h as isize, s.w as isize);
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = sharp.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for dy in -r..=r {
                        let yy = (y + dy).clamp(0, h - 1);
                        let row = &src[(yy * w) as usize..((yy + 1) * w) as usize];
                        for dx in -r..=r {
                            let xx = (x + dx).clamp(0, w - 1);
                            acc += kernel.at(dy, dx) * row[xx as usize] as f64;
                        }
                    }
                    dst[(y * w + x) as usize] = acc as f32;
                }
            }
        }
    }
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise).expect("finite, non-negative sigma");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng) as f32;
        }
    }
    Ok(out.map(|v| v.clamp(0.0, 1.0)))
}
