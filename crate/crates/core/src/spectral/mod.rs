//! Real 2-D Fourier transforms over the spatial axes of a tensor.
//!
//! A real `H×W` plane has a conjugate-symmetric spectrum,
//! `X[H−u, W−v] = X*[u, v]`, so only the `floor(W/2)+1` leftmost columns
//! are kept. The forward transform is unnormalized and the inverse carries
//! the `1/(H·W)` factor.
//!
//! The adjoints are taken with respect to the plain real inner product on
//! the stored `(re, im)` planes, which is what backpropagation through a
//! half spectrum needs. Columns other than DC and (for even `W`) Nyquist
//! stand for two bins of the full spectrum; [`column_weights`] exposes that
//! multiplicity for callers who want the full-spectrum inner product.

pub mod fft;

use std::f64::consts::PI;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Float, Shape, Tensor};

pub use fft::Fft;

/// Width of the non-redundant half spectrum of a length-`w` real signal.
pub const fn half_width(w: usize) -> usize {
    w / 2 + 1
}

/// Multiplicity of each stored column in the full spectrum: 1 for the
/// self-conjugate DC and Nyquist columns, 2 otherwise.
pub fn column_weights(width: usize) -> Vec<f64> {
    (0..half_width(width))
        .map(|v| if v == 0 || (width % 2 == 0 && v == width / 2) { 1.0 } else { 2.0 })
        .collect()
}

/// Literal `O(N²)` evaluation of `X[k] = Σ_n x[n] e^{−j2πkn/N}`.
pub fn dft1d_naive<T: Float>(x: &[T]) -> Vec<Complex<T>> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (t, &v) in x.iter().enumerate() {
                let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v.as_f64() * angle.cos();
                im += v.as_f64() * angle.sin();
            }
            Complex::new(T::of(re), T::of(im))
        })
        .collect()
}

/// Non-redundant spectrum of a real `N×C×H×W` tensor, as separate real and
/// imaginary planes of shape `N×C×H×(floor(W/2)+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSpectrum<T = f32> {
    re: Tensor<T>,
    im: Tensor<T>,
    width: Option<usize>,
}

impl<T: Float> HalfSpectrum<T> {
    /// `width` is the spatial width of the signal the spectrum belongs to;
    /// it cannot be recovered from the half-spectrum shape alone.
    pub fn new(re: Tensor<T>, im: Tensor<T>, width: Option<usize>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::shape(
                "HalfSpectrum",
                format!("real {:?} vs imaginary {:?}", re.shape(), im.shape()),
            ));
        }
        if let Some(w) = width {
            if half_width(w) != re.shape().w {
                return Err(Error::shape(
                    "HalfSpectrum",
                    format!("width {w} needs {} columns, got {:?}", half_width(w), re.shape()),
                ));
            }
        }
        Ok(HalfSpectrum { re, im, width })
    }

    pub fn zeros(signal: Shape) -> Self {
        let s = Shape::new(signal.n, signal.c, signal.h, half_width(signal.w));
        HalfSpectrum {
            re: Tensor::zeros(s),
            im: Tensor::zeros(s),
            width: Some(signal.w),
        }
    }

    pub fn re(&self) -> &Tensor<T> {
        &self.re
    }

    pub fn im(&self) -> &Tensor<T> {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut Tensor<T> {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut Tensor<T> {
        &mut self.im
    }

    pub fn width(&self) -> Option<usize> {
        self.width
    }

    /// Shape of each stored plane.
    pub fn shape(&self) -> Shape {
        self.re.shape()
    }

    /// Shape of the real signal this spectrum inverts to.
    pub fn signal_shape(&self) -> Result<Shape> {
        let w = self.width.ok_or_else(|| {
            Error::Invalid("half spectrum carries no original width".into())
        })?;
        let s = self.shape();
        Ok(Shape::new(s.n, s.c, s.h, w))
    }

    pub fn bin(&self, n: usize, c: usize, u: usize, v: usize) -> Complex<T> {
        Complex::new(self.re.at(n, c, u, v), self.im.at(n, c, u, v))
    }

    /// Real planes followed by imaginary planes along the channel axis:
    /// `N×2C×H×Wf`.
    pub fn to_channels(&self) -> Tensor<T> {
        crate::ops::concat_channels(&self.re, &self.im).expect("planes share a shape")
    }

    /// Inverse of [`HalfSpectrum::to_channels`].
    pub fn from_channels(t: &Tensor<T>, width: Option<usize>) -> Result<Self> {
        let c = t.shape().c;
        if c % 2 != 0 {
            return Err(Error::shape(
                "HalfSpectrum::from_channels",
                format!("odd channel count in {:?}", t.shape()),
            ));
        }
        let re = crate::ops::narrow_channels(t, 0, c / 2)?;
        let im = crate::ops::narrow_channels(t, c / 2, c / 2)?;
        Self::new(re, im, width)
    }

    /// `Σ re·re' + im·im'` over the stored bins.
    pub fn dot(&self, other: &Self) -> Result<T> {
        Ok(self.re.dot(&other.re)? + self.im.dot(&other.im)?)
    }

    /// Inner product of the full spectra both halves stand for.
    pub fn weighted_dot(&self, other: &Self) -> Result<T> {
        Ok(self.scale_columns(&column_weights(self.width_or_err()?))?.dot(other)?)
    }

    /// Multiplies stored column `v` by `factors[v]`.
    pub fn scale_columns(&self, factors: &[f64]) -> Result<Self> {
        let s = self.shape();
        if factors.len() != s.w {
            return Err(Error::shape(
                "scale_columns",
                format!("{} factors for {} columns", factors.len(), s.w),
            ));
        }
        let f: Vec<T> = factors.iter().map(|&v| T::of(v)).collect();
        let scale = |t: &Tensor<T>| {
            let mut out = t.clone();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                *v *= f[i % s.w];
            }
            out
        };
        Ok(HalfSpectrum {
            re: scale(&self.re),
            im: scale(&self.im),
            width: self.width,
        })
    }

    /// Rebuilds the full `H×W` spectrum of plane `(n, c)` from conjugate
    /// symmetry.
    pub fn full_plane(&self, n: usize, c: usize) -> Result<Vec<Complex<T>>> {
        let s = self.signal_shape()?;
        let wf = half_width(s.w);
        let mut full = vec![Complex::new(T::zero(), T::zero()); s.h * s.w];
        for u in 0..s.h {
            for v in 0..s.w {
                full[u * s.w + v] = if v < wf {
                    self.bin(n, c, u, v)
                } else {
                    self.bin(n, c, (s.h - u) % s.h, s.w - v).conj()
                };
            }
        }
        Ok(full)
    }

    fn width_or_err(&self) -> Result<usize> {
        Ok(self.signal_shape()?.w)
    }
}

/// Per-channel unnormalized 2-D real FFT.
pub fn rfft2<T: Float>(x: &Tensor<T>) -> HalfSpectrum<T> {
    let s = x.shape();
    let wf = half_width(s.w);
    let row_fft = Fft::<T>::new(s.w);
    let col_fft = Fft::<T>::new(s.h);
    let planes: Vec<Vec<Complex<T>>> = (0..s.n * s.c)
        .into_par_iter()
        .map(|p| {
            let src = x.plane(p / s.c, p % s.c);
            let mut half = vec![Complex::new(T::zero(), T::zero()); s.h * wf];
            let mut row = vec![Complex::new(T::zero(), T::zero()); s.w];
            for y in 0..s.h {
                for (r, &v) in row.iter_mut().zip(&src[y * s.w..(y + 1) * s.w]) {
                    *r = Complex::new(v, T::zero());
                }
                row_fft.forward(&mut row);
                half[y * wf..(y + 1) * wf].copy_from_slice(&row[..wf]);
            }
            let mut col = vec![Complex::new(T::zero(), T::zero()); s.h];
            for v in 0..wf {
                for u in 0..s.h {
                    col[u] = half[u * wf + v];
                }
                col_fft.forward(&mut col);
                for u in 0..s.h {
                    half[u * wf + v] = col[u];
                }
            }
            half
        })
        .collect();
    let hs = Shape::new(s.n, s.c, s.h, wf);
    let mut re = Vec::with_capacity(hs.numel());
    let mut im = Vec::with_capacity(hs.numel());
    for plane in planes {
        re.extend(plane.iter().map(|z| z.re));
        im.extend(plane.iter().map(|z| z.im));
    }
    HalfSpectrum {
        re: Tensor::from_vec(hs, re).expect("sized above"),
        im: Tensor::from_vec(hs, im).expect("sized above"),
        width: Some(s.w),
    }
}

/// Inverse of [`rfft2`], scaled by `1/(H·W)`.
///
/// The imaginary parts of the self-conjugate DC and Nyquist columns are
/// discarded after the column transform, as any real-output inverse must.
pub fn irfft2<T: Float>(spec: &HalfSpectrum<T>) -> Result<Tensor<T>> {
    let s = spec.signal_shape()?;
    let wf = half_width(s.w);
    let row_fft = Fft::<T>::new(s.w);
    let col_fft = Fft::<T>::new(s.h);
    let norm = T::one() / T::of((s.h * s.w) as f64);
    let mut out = vec![T::zero(); s.numel()];
    out.par_chunks_mut(s.plane())
        .enumerate()
        .for_each(|(p, dst)| {
            let (n, c) = (p / s.c, p % s.c);
            let re = spec.re.plane(n, c);
            let im = spec.im.plane(n, c);
            let mut half: Vec<Complex<T>> =
                re.iter().zip(im).map(|(&a, &b)| Complex::new(a, b)).collect();
            let mut col = vec![Complex::new(T::zero(), T::zero()); s.h];
            for v in 0..wf {
                for u in 0..s.h {
                    col[u] = half[u * wf + v];
                }
                col_fft.inverse(&mut col);
                for u in 0..s.h {
                    half[u * wf + v] = col[u];
                }
            }
            let mut row = vec![Complex::new(T::zero(), T::zero()); s.w];
            for y in 0..s.h {
                let h = &half[y * wf..(y + 1) * wf];
                row[0] = Complex::new(h[0].re, T::zero());
                for v in 1..wf {
                    if 2 * v == s.w {
                        row[v] = Complex::new(h[v].re, T::zero());
                    } else {
                        row[v] = h[v];
                        row[s.w - v] = h[v].conj();
                    }
                }
                row_fft.inverse(&mut row);
                for (d, r) in dst[y * s.w..(y + 1) * s.w].iter_mut().zip(&row) {
                    *d = r.re * norm;
                }
            }
        });
    Tensor::from_vec(s, out)
}

/// Adjoint of [`rfft2`]: `g[m,n] = Σ_{u,v stored} Re(S[u,v]·e^{+j2π(um/H + vn/W)})`.
pub fn rfft2_adjoint<T: Float>(grad: &HalfSpectrum<T>) -> Result<Tensor<T>> {
    let s = grad.signal_shape()?;
    let inv: Vec<f64> = column_weights(s.w).iter().map(|w| 1.0 / w).collect();
    let x = irfft2(&grad.scale_columns(&inv)?)?;
    Ok(x.scale(T::of((s.h * s.w) as f64)))
}

/// Adjoint of [`irfft2`] for a signal of shape `signal`.
pub fn irfft2_adjoint<T: Float>(grad: &Tensor<T>) -> HalfSpectrum<T> {
    let s = grad.shape();
    let weights: Vec<f64> = column_weights(s.w)
        .iter()
        .map(|w| w / (s.h * s.w) as f64)
        .collect();
    rfft2(grad)
        .scale_columns(&weights)
        .expect("weights sized to the spectrum")
}
