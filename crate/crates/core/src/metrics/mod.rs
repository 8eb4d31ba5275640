//! Image quality metrics, FLOP accounting and spectrum analysis.

pub mod flops;
pub mod spectrum;

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

pub use flops::{conv_macs, flops_count, FlopReport};
pub use spectrum::{feature_spectrum, image_spectrum, radial_band_energy, spectrum_diff, SpectrumMap};

/// `10·log10(peak² / MSE)` over all elements; `+∞` when the inputs are
/// identical.
pub fn psnr<T: Float>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("psnr", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let se: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum();
    if se == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / (se / a.len() as f64)).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable valid-mode filtering with the SSIM window.
fn filter_valid(src: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11×11 gaussian window (σ = 1.5), `K1 = 0.01`,
/// `K2 = 0.03`, peak 1, averaged over channels and batch items.
pub fn ssim<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let s = a.shape();
    if s != b.shape() {
        return Err(Error::shape("ssim", format!("{:?} vs {:?}", s, b.shape())));
    }
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::Invalid(format!(
            "ssim needs images of at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {}×{}",
            s.h, s.w
        )));
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let g = gaussian_window();
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            let x: Vec<f64> = a.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let y: Vec<f64> = b.plane(n, c).iter().map(|v| v.as_f64()).collect();
            let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
            let mx = filter_valid(&x, s.h, s.w, &g);
            let my = filter_valid(&y, s.h, s.w, &g);
            let mxx = filter_valid(&prod(&x, &x), s.h, s.w, &g);
            let myy = filter_valid(&prod(&y, &y), s.h, s.w, &g);
            let mxy = filter_valid(&prod(&x, &y), s.h, s.w, &g);
            let mut acc = 0.0;
            for i in 0..mx.len() {
                let (ux, uy) = (mx[i], my[i]);
                let vx = mxx[i] - ux * ux;
                let vy = myy[i] - uy * uy;
                let cxy = mxy[i] - ux * uy;
                acc += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            }
            total += acc / mx.len() as f64;
        }
    }
    Ok(total / (s.n * s.c) as f64)
}
