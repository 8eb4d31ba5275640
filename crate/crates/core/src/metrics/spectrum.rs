//! Magnitude spectra of images and intermediate features.
//!
//! Maps hold linear magnitudes on the full `H×W` grid with DC moved to
//! `(H/2, W/2)`; [`SpectrumMap::log1p`] gives the display form.

use std::fmt;

use crate::error::{Error, Result};
use crate::network::Model;
use crate::spectral::rfft2;
use crate::tensor::{Float, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpectrumSource {
    Image,
    Diff,
    Feature { block: String, stream: Stream },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Res,
    Fft,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Res => "res",
            Stream::Fft => "fft",
        }
    }
}

impl fmt::Display for SpectrumSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectrumSource::Image => write!(f, "image"),
            SpectrumSource::Diff => write!(f, "diff"),
            SpectrumSource::Feature { block, stream } => write!(f, "{block}.{}", stream.as_str()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumMap {
    pub h: usize,
    pub w: usize,
    /// Row-major, DC-centered, linear magnitudes.
    pub data: Vec<f64>,
    pub source: SpectrumSource,
}

impl SpectrumMap {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.w + v]
    }

    pub fn center(&self) -> (usize, usize) {
        (self.h / 2, self.w / 2)
    }

    pub fn log1p(&self) -> Vec<f64> {
        self.data.iter().map(|m| m.ln_1p()).collect()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Radius of bin `(u, v)`, each axis normalized to its Nyquist
    /// frequency and clamped to 1 (corners count as the outermost radius).
    pub fn radius(&self, u: usize, v: usize) -> f64 {
        let (cy, cx) = self.center();
        let fy = (u as f64 - cy as f64) / (self.h as f64 / 2.0).max(1.0);
        let fx = (v as f64 - cx as f64) / (self.w as f64 / 2.0).max(1.0);
        (fy * fy + fx * fx).sqrt().min(1.0)
    }
}

/// Channel- and batch-averaged `|F|` of every plane of `x`, DC-centered.
fn mean_magnitude<T: Float>(x: &Tensor<T>) -> Result<(usize, usize, Vec<f64>)> {
    let s = x.shape();
    let spec = rfft2(x);
    let (h, w) = (s.h, s.w);
    let mut acc = vec![0.0; h * w];
    for n in 0..s.n {
        for c in 0..s.c {
            let full = spec.full_plane(n, c)?;
            for u in 0..h {
                for v in 0..w {
                    let du = (u + h / 2) % h;
                    let dv = (v + w / 2) % w;
                    acc[du * w + dv] += full[u * w + v].norm().as_f64();
                }
            }
        }
    }
    let k = (s.n * s.c) as f64;
    acc.iter_mut().for_each(|m| *m /= k);
    Ok((h, w, acc))
}

pub fn image_spectrum<T: Float>(x: &Tensor<T>) -> Result<SpectrumMap> {
    let (h, w, data) = mean_magnitude(x)?;
    Ok(SpectrumMap {
        h,
        w,
        data,
        source: SpectrumSource::Image,
    })
}

/// `| |F(a)| − |F(b)| |`, channel-averaged.
pub fn spectrum_diff<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<SpectrumMap> {
    if a.shape() != b.shape() {
        return Err(Error::shape("spectrum_diff", format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let sa = rfft2(a);
    let sb = rfft2(b);
    let s = a.shape();
    let (h, w) = (s.h, s.w);
    let mut acc = vec![0.0; h * w];
    for n in 0..s.n {
        for c in 0..s.c {
            let fa = sa.full_plane(n, c)?;
            let fb = sb.full_plane(n, c)?;
            for u in 0..h {
                for v in 0..w {
                    let d = (fa[u * w + v].norm().as_f64() - fb[u * w + v].norm().as_f64()).abs();
                    acc[((u + h / 2) % h) * w + (v + w / 2) % w] += d;
                }
            }
        }
    }
    let k = (s.n * s.c) as f64;
    acc.iter_mut().for_each(|m| *m /= k);
    Ok(SpectrumMap {
        h,
        w,
        data: acc,
        source: SpectrumSource::Diff,
    })
}

/// Spectra of the spatial stream and (for Res FFT-Conv blocks) the
/// frequency stream of `block`, in that order.
pub fn feature_spectrum<T: Float>(model: &Model<T>, image: &Tensor<T>, block: &str) -> Result<Vec<SpectrumMap>> {
    let (_, tap) = model.forward_tapped(image, block)?;
    let mut maps = Vec::with_capacity(2);
    let mut push = |t: &Tensor<T>, stream| -> Result<()> {
        let (h, w, data) = mean_magnitude(t)?;
        maps.push(SpectrumMap {
            h,
            w,
            data,
            source: SpectrumSource::Feature {
                block: tap.block.clone(),
                stream,
            },
        });
        Ok(())
    };
    push(&tap.res, Stream::Res)?;
    if let Some(f) = &tap.fft {
        push(f, Stream::Fft)?;
    }
    Ok(maps)
}

/// Sum of magnitudes per radius band. Bands are `[lo, hi)` intervals that
/// must tile `[0, 1]` in order; the last one also takes radius 1.
pub fn radial_band_energy(map: &SpectrumMap, bands: &[(f64, f64)]) -> Result<Vec<f64>> {
    let tol = 1e-12;
    let ok = !bands.is_empty()
        && bands[0].0.abs() < tol
        && (bands[bands.len() - 1].1 - 1.0).abs() < tol
        && bands.iter().all(|&(lo, hi)| lo < hi)
        && bands.windows(2).all(|p| (p[0].1 - p[1].0).abs() < tol);
    if !ok {
        return Err(Error::Invalid(format!("radius bands {bands:?} do not partition [0, 1]")));
    }
    let mut e = vec![0.0; bands.len()];
    for u in 0..map.h {
        for v in 0..map.w {
            let r = map.radius(u, v);
            let i = bands.iter().position(|&(_, hi)| r < hi).unwrap_or(bands.len() - 1);
            e[i] += map.at(u, v);
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn constant_image_is_a_dc_spike() {
        let x = Tensor::full(Shape::new(1, 3, 16, 12), 0.25f64);
        let m = image_spectrum(&x).unwrap();
        let (cy, cx) = m.center();
        assert!((m.at(cy, cx) - 0.25 * 192.0).abs() < 1e-9);
        assert!((m.total() - m.at(cy, cx)).abs() < 1e-9);
        let e = radial_band_energy(&m, &[(0.0, 0.5), (0.5, 1.0)]).unwrap();
        assert!(e[1].abs() < 1e-9);
    }

    #[test]
    fn horizontal_sinusoid_peaks_on_axis() {
        let (h, w, f) = (8, 16, 3);
        let x = Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, _, xx| {
            (2.0 * std::f64::consts::PI * (f * xx) as f64 / w as f64).cos()
        });
        let m = image_spectrum(&x).unwrap();
        let (cy, cx) = m.center();
        assert!((m.at(cy, cx + f) - 64.0).abs() < 1e-9);
        assert!((m.at(cy, cx - f) - 64.0).abs() < 1e-9);
        assert!((m.total() - 128.0).abs() < 1e-8);
    }

    #[test]
    fn diff_of_self_is_zero_and_sizes_checked() {
        let x = Tensor::from_fn(Shape::new(1, 3, 8, 8), |_, c, y, xx| ((c + 3 * y + xx * xx) % 5) as f32);
        assert!(spectrum_diff(&x, &x).unwrap().data.iter().all(|&v| v == 0.0));
        assert!(spectrum_diff(&x, &Tensor::zeros(Shape::new(1, 3, 8, 9))).is_err());
    }

    #[test]
    fn bands_must_partition() {
        let m = image_spectrum(&Tensor::full(Shape::new(1, 1, 4, 4), 1.0f32)).unwrap();
        for bad in [
            vec![],
            vec![(0.0, 0.5)],
            vec![(0.1, 1.0)],
            vec![(0.0, 0.5), (0.6, 1.0)],
            vec![(0.0, 0.6), (0.5, 1.0)],
            vec![(0.0, 0.0), (0.0, 1.0)],
        ] {
            assert!(radial_band_energy(&m, &bad).is_err(), "{bad:?}");
        }
        assert!(radial_band_energy(&m, &[(0.0, 1.0)]).is_ok());
    }
}
