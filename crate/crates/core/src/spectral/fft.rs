//! Complex FFT of arbitrary length.
//!
//! Power-of-two lengths use an iterative radix-2 decimation-in-time kernel.
//! Other lengths go through Bluestein's chirp-z identity, which re-expresses
//! the DFT as a circular convolution of power-of-two length.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::tensor::Float;

fn cis<T: Float>(angle: f64) -> Complex<T> {
    Complex::new(T::of(angle.cos()), T::of(angle.sin()))
}

#[derive(Clone, Debug)]
struct Radix2<T> {
    n: usize,
    /// `e^{−2πik/n}` for `k < n/2`.
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

impl<T: Float> Radix2<T> {
    fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| cis(-2.0 * PI * k as f64 / n as f64))
            .collect();
        Radix2 { n, twiddles, bitrev }
    }

    fn forward(&self, buf: &mut [Complex<T>]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len *= 2;
        }
    }
}

#[derive(Clone, Debug)]
struct Bluestein<T> {
    n: usize,
    inner: Radix2<T>,
    /// `e^{−jπk²/n}` for `k < n`.
    chirp: Vec<Complex<T>>,
    /// Spectrum of the conjugate chirp, pre-divided by the inner length.
    kernel_hat: Vec<Complex<T>>,
}

impl<T: Float> Bluestein<T> {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // k² mod 2n keeps the phase argument small and exact.
        let chirp: Vec<Complex<T>> = (0..n)
            .map(|k| {
                let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                cis(-PI * k2 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex::new(T::zero(), T::zero()); m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        let scale = T::one() / T::of(m as f64);
        let kernel_hat = kernel.into_iter().map(|v| v * scale).collect();
        Bluestein {
            n,
            inner,
            chirp,
            kernel_hat,
        }
    }

    fn forward(&self, buf: &mut [Complex<T>]) {
        let m = self.inner.n;
        let mut work = vec![Complex::new(T::zero(), T::zero()); m];
        for k in 0..self.n {
            work[k] = buf[k] * self.chirp[k];
        }
        self.inner.forward(&mut work);
        for (w, &h) in work.iter_mut().zip(&self.kernel_hat) {
            *w = (*w * h).conj();
        }
        // Inverse via conjugation; the 1/m factor is folded into kernel_hat.
        self.inner.forward(&mut work);
        for k in 0..self.n {
            buf[k] = work[k].conj() * self.chirp[k];
        }
    }
}

#[derive(Clone, Debug)]
enum Kernel<T> {
    Radix2(Radix2<T>),
    Bluestein(Bluestein<T>),
}

/// A reusable transform of one fixed length. Both directions are unnormalized.
#[derive(Clone, Debug)]
pub struct Fft<T> {
    kernel: Kernel<T>,
}

impl<T: Float> Fft<T> {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let kernel = if n.is_power_of_two() {
            Kernel::Radix2(Radix2::new(n))
        } else {
            Kernel::Bluestein(Bluestein::new(n))
        };
        Fft { kernel }
    }

    pub fn len(&self) -> usize {
        match &self.kernel {
            Kernel::Radix2(k) => k.n,
            Kernel::Bluestein(k) => k.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `X[k] = Σ x[n] e^{−j2πkn/N}` in place.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.len());
        match &self.kernel {
            Kernel::Radix2(k) => k.forward(buf),
            Kernel::Bluestein(k) => k.forward(buf),
        }
    }

    /// `x[n] = Σ X[k] e^{+j2πkn/N}` in place (no 1/N factor).
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        buf.iter_mut().for_each(|v| *v = v.conj());
        self.forward(buf);
        buf.iter_mut().for_each(|v| *v = v.conj());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| v * cis::<f64>(-2.0 * PI * ((k * t) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_all_small_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=40 {
            let x: Vec<Complex<f64>> = (0..n)
                .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut y = x.clone();
            Fft::new(n).forward(&mut y);
            let want = naive(&x);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).norm() < 1e-10, "n = {n}");
            }
        }
    }

    #[test]
    fn inverse_round_trips_with_one_over_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1, 2, 3, 7, 16, 30, 64, 100] {
            let x: Vec<Complex<f64>> = (0..n)
                .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let fft = Fft::new(n);
            let mut y = x.clone();
            fft.forward(&mut y);
            fft.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a / n as f64 - b).norm() < 1e-12);
            }
        }
    }
}
