//! Eager numeric kernels on [`Tensor`]s.
//!
//! Each differentiable kernel is paired with the adjoint the autodiff graph
//! needs. Parallel loops split work by output plane only, so every output
//! value is produced by one fixed summation order regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Float, Shape, Tensor};

/// Output length of a strided, zero-padded correlation along one axis.
pub fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (padded >= k && stride > 0).then(|| (padded - k) / stride + 1)
}

/// Output length of a transposed convolution: `(len−1)·stride + k − 2·pad`.
pub fn conv_transpose_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    ((len - 1) * stride + k).checked_sub(2 * pad).filter(|&l| l > 0)
}

/// Range of output columns `o` such that `o·stride + k − pad` lands in `0..len`.
#[inline]
fn valid_range(out_len: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    if len + pad <= k {
        return (0, 0);
    }
    let hi = ((len - 1 + pad - k) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

fn bias_values<T: Float>(b: Option<&Tensor<T>>, cout: usize, op: &'static str) -> Result<Vec<T>> {
    match b {
        None => Ok(vec![T::zero(); cout]),
        Some(b) => {
            if b.len() != cout {
                return Err(Error::shape(
                    op,
                    format!("bias has {} values for {cout} output channels", b.len()),
                ));
            }
            b.ensure_finite(op)?;
            Ok(b.data().to_vec())
        }
    }
}

/// Zero-padded cross-correlation plus bias. `w` is `[Cout, Cin, Kh, Kw]`,
/// the bias holds `Cout` values (stored as `[1, Cout, 1, 1]`).
pub fn conv2d<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ws = w.shape();
    if stride == 0 {
        return Err(Error::Invalid("conv2d stride must be ≥ 1".into()));
    }
    if ws.c != xs.c {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {ws:?} expects {} input channels, input is {xs:?}", ws.c),
        ));
    }
    w.ensure_finite("conv2d weights")?;
    let bias = bias_values(b, ws.n, "conv2d")?;
    let (oh, ow) = match (
        conv_out_len(xs.h, ws.h, stride, pad),
        conv_out_len(xs.w, ws.w, stride, pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {ws:?} larger than padded input {xs:?} (pad {pad})"),
            ))
        }
    };
    let out_shape = Shape::new(xs.n, ws.n, oh, ow);
    let geo = Geometry {
        c: xs.c,
        h: xs.h,
        w: xs.w,
        kh: ws.h,
        kw: ws.w,
        stride,
        pad,
        oh,
        ow,
    };
    let plane = oh * ow;
    let mut out = vec![T::zero(); out_shape.numel()];
    let mut cols = Vec::new();
    for (n, dst) in out.chunks_mut(ws.n * plane).enumerate() {
        for (o, d) in dst.chunks_mut(plane).enumerate() {
            d.fill(bias[o]);
        }
        let src = geo.columns(batch_slice(x, n), &mut cols);
        matmul(ws.n, geo.rows(), plane, w.data(), false, src, false, dst, true);
    }
    Tensor::from_vec(out_shape, out)
}

fn batch_slice<T: Float>(t: &Tensor<T>, n: usize) -> &[T] {
    let len = t.shape().c * t.shape().plane();
    &t.data()[n * len..(n + 1) * len]
}

/// `c (m×n) ← a·b`, or `c += a·b` when `accumulate`. Operands are dense
/// row-major; `ta`/`tb` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
fn matmul<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let sa = if ta { (1, m as isize) } else { (k as isize, 1) };
    let sb = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the asserts above bound every element addressed by the
    // strides; `c` is a distinct mutable borrow.
    unsafe {
        T::gemm(m, k, n, a.as_ptr(), sa, b.as_ptr(), sb, beta, c.as_mut_ptr(), (n as isize, 1));
    }
}

/// Index geometry of one strided, zero-padded correlation, used to
/// unfold an input into patch columns (rows `(i, ky, kx)`, columns
/// `(oy, ox)`) and to fold them back.
#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// A pointwise conv needs no unfolding.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Visits every in-bounds (row, output offset, input offset) run; `f`
    /// receives the column-buffer start, the input start and the run
    /// length (stride 1) or is called per element.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let plane = self.oh * self.ow;
        for i in 0..self.c {
            for ky in 0..self.kh {
                let (oy0, oy1) = valid_range(self.oh, self.h, ky, self.stride, self.pad);
                for kx in 0..self.kw {
                    let (ox0, ox1) = valid_range(self.ow, self.w, kx, self.stride, self.pad);
                    if ox0 >= ox1 {
                        continue;
                    }
                    let row = (i * self.kh + ky) * self.kw + kx;
                    for oy in oy0..oy1 {
                        let iy = oy * self.stride + ky - self.pad;
                        let col = row * plane + oy * self.ow;
                        let inp = (i * self.h + iy) * self.w;
                        f(col + ox0, inp + ox0 * self.stride + kx - self.pad, ox1 - ox0, self.stride);
                    }
                }
            }
        }
    }

    /// Patch columns of one batch item (`c` planes of `h×w`).
    fn columns<'a, T: Float>(&self, src: &'a [T], buf: &'a mut Vec<T>) -> &'a [T] {
        if self.is_pointwise() {
            return src;
        }
        buf.clear();
        buf.resize(self.rows() * self.oh * self.ow, T::zero());
        self.for_each_run(|col, inp, len, stride| {
            if stride == 1 {
                buf[col..col + len].copy_from_slice(&src[inp..inp + len]);
            } else {
                for j in 0..len {
                    buf[col + j] = src[inp + j * stride];
                }
            }
        });
        buf
    }

    /// Adjoint of [`Geometry::columns`]: scatter-adds columns into `dst`.
    fn fold_columns<T: Float>(&self, cols: &[T], dst: &mut [T]) {
        self.for_each_run(|col, inp, len, stride| {
            if stride == 1 {
                for (d, &s) in dst[inp..inp + len].iter_mut().zip(&cols[col..col + len]) {
                    *d += s;
                }
            } else {
                for j in 0..len {
                    dst[inp + j * stride] += cols[col + j];
                }
            }
        });
    }
}

/// Gradient of [`conv2d`] with respect to its input, for an input of
/// spatial size `in_h × in_w`.
pub fn conv2d_input_grad<T: Float>(
    dy: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    (in_h, in_w): (usize, usize),
) -> Result<Tensor<T>> {
    let ds = dy.shape();
    let ws = w.shape();
    if ds.c != ws.n {
        return Err(Error::shape(
            "conv2d_input_grad",
            format!("cotangent {ds:?} vs kernel {ws:?}"),
        ));
    }
    let geo = Geometry {
        c: ws.c,
        h: in_h,
        w: in_w,
        kh: ws.h,
        kw: ws.w,
        stride,
        pad,
        oh: ds.h,
        ow: ds.w,
    };
    let in_shape = Shape::new(ds.n, ws.c, in_h, in_w);
    let plane = ds.h * ds.w;
    let mut out = vec![T::zero(); in_shape.numel()];
    let mut cols = Vec::new();
    for (n, dst) in out.chunks_mut(ws.c * in_h * in_w).enumerate() {
        let g = batch_slice(dy, n);
        if geo.is_pointwise() {
            matmul(geo.rows(), ws.n, plane, w.data(), true, g, false, dst, false);
        } else {
            cols.clear();
            cols.resize(geo.rows() * plane, T::zero());
            matmul(geo.rows(), ws.n, plane, w.data(), true, g, false, &mut cols, false);
            geo.fold_columns(&cols, dst);
        }
    }
    Tensor::from_vec(in_shape, out)
}

/// Gradient of [`conv2d`] with respect to a `[Cout, Cin, kh, kw]` kernel.
pub fn conv2d_weight_grad<T: Float>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    (kh, kw): (usize, usize),
) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ds = dy.shape();
    if xs.n != ds.n {
        return Err(Error::shape(
            "conv2d_weight_grad",
            format!("input {xs:?} vs cotangent {ds:?}"),
        ));
    }
    let geo = Geometry {
        c: xs.c,
        h: xs.h,
        w: xs.w,
        kh,
        kw,
        stride,
        pad,
        oh: ds.h,
        ow: ds.w,
    };
    let wshape = Shape::new(ds.c, xs.c, kh, kw);
    let plane = ds.h * ds.w;
    let mut out = vec![T::zero(); wshape.numel()];
    let mut cols = Vec::new();
    for n in 0..xs.n {
        let src = geo.columns(batch_slice(x, n), &mut cols);
        matmul(ds.c, plane, geo.rows(), batch_slice(dy, n), false, src, true, &mut out, n > 0);
    }
    Tensor::from_vec(wshape, out)
}

/// Per-channel sum of a cotangent, shaped like a bias `[1, C, 1, 1]`.
pub fn bias_grad<T: Float>(dy: &Tensor<T>) -> Tensor<T> {
    let s = dy.shape();
    let mut g = Tensor::zeros(Shape::new(1, s.c, 1, 1));
    for n in 0..s.n {
        for c in 0..s.c {
            let v: T = dy.plane(n, c).iter().copied().sum();
            g.data_mut()[c] += v;
        }
    }
    g
}

/// Transposed convolution with a `[Cin, Cout, Kh, Kw]` kernel. Output size
/// per axis is `(len−1)·stride + K − 2·pad`; there is no output padding, so
/// `K = 4, stride = 2, pad = 1` exactly doubles the input.
pub fn conv_transpose2d<T: Float>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ws = w.shape();
    if stride == 0 {
        return Err(Error::Invalid("conv_transpose2d stride must be ≥ 1".into()));
    }
    if ws.n != xs.c {
        return Err(Error::shape(
            "conv_transpose2d",
            format!("kernel {ws:?} expects {} input channels, input is {xs:?}", ws.n),
        ));
    }
    w.ensure_finite("conv_transpose2d weights")?;
    let bias = bias_values(b, ws.c, "conv_transpose2d")?;
    let (oh, ow) = match (
        conv_transpose_out_len(xs.h, ws.h, stride, pad),
        conv_transpose_out_len(xs.w, ws.w, stride, pad),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("padding {pad} consumes the whole output for {xs:?} and {ws:?}"),
            ))
        }
    };
    // The forward map of the correlation this transposes must land back on
    // the input grid; otherwise the adjoint relation does not hold.
    if conv_out_len(oh, ws.h, stride, pad) != Some(xs.h)
        || conv_out_len(ow, ws.w, stride, pad) != Some(xs.w)
    {
        return Err(Error::shape(
            "conv_transpose2d",
            format!("stride {stride} / pad {pad} inconsistent with kernel {ws:?}"),
        ));
    }
    let mut y = conv2d_input_grad(x, w, stride, pad, (oh, ow))?;
    let s = y.shape();
    for n in 0..s.n {
        for c in 0..s.c {
            let bv = bias[c];
            y.plane_mut(n, c).iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(y)
}

pub fn relu<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Stacks the channels of `a` then `b`.
pub fn concat_channels<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::shape("concat_channels", format!("{sa:?} vs {sb:?}")));
    }
    let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..sa.n {
        let la = sa.c * sa.plane();
        let lb = sb.c * sb.plane();
        data.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
        data.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
    }
    Tensor::from_vec(out_shape, data)
}

/// Channels `start..start+len`.
pub fn narrow_channels<T: Float>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if len == 0 || start + len > s.c {
        return Err(Error::shape(
            "narrow_channels",
            format!("channels {start}..{} of {s:?}", start + len),
        ));
    }
    let p = s.plane();
    let mut data = Vec::with_capacity(s.n * len * p);
    for n in 0..s.n {
        let base = (n * s.c + start) * p;
        data.extend_from_slice(&x.data()[base..base + len * p]);
    }
    Tensor::from_vec(Shape::new(s.n, len, s.h, s.w), data)
}

/// Writes `src` into channels `start..` of a zero tensor shaped `full`; the
/// adjoint of [`narrow_channels`].
pub fn unnarrow_channels<T: Float>(src: &Tensor<T>, full: Shape, start: usize) -> Tensor<T> {
    let s = src.shape();
    let p = full.plane();
    let mut out = Tensor::zeros(full);
    for n in 0..s.n {
        let dst = (n * full.c + start) * p;
        let from = n * s.c * p;
        out.data_mut()[dst..dst + s.c * p].copy_from_slice(&src.data()[from..from + s.c * p]);
    }
    out
}

/// 2×2 average pooling; both spatial dims must be even.
pub fn downsample2<T: Float>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(
            "downsample2",
            format!("spatial dims of {s:?} must be even"),
        ));
    }
    let quarter = T::of(0.25);
    Ok(Tensor::from_fn(
        Shape::new(s.n, s.c, s.h / 2, s.w / 2),
        |n, c, y, xx| {
            let (y2, x2) = (2 * y, 2 * xx);
            let top = x.at(n, c, y2, x2) + x.at(n, c, y2, x2 + 1);
            let bottom = x.at(n, c, y2 + 1, x2) + x.at(n, c, y2 + 1, x2 + 1);
            (top + bottom) * quarter
        },
    ))
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, s.h * 2, s.w * 2), |n, c, y, xx| {
        x.at(n, c, y / 2, xx / 2)
    })
}

/// Adjoint of [`upsample2`]: 2×2 sum pooling.
pub fn upsample2_adjoint<T: Float>(dy: &Tensor<T>) -> Tensor<T> {
    let s = dy.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, s.h / 2, s.w / 2), |n, c, y, x| {
        let (y2, x2) = (2 * y, 2 * x);
        dy.at(n, c, y2, x2) + dy.at(n, c, y2, x2 + 1) + dy.at(n, c, y2 + 1, x2) + dy.at(n, c, y2 + 1, x2 + 1)
    })
}

/// Adjoint of [`downsample2`].
pub fn downsample2_adjoint<T: Float>(dy: &Tensor<T>) -> Tensor<T> {
    upsample2(dy).scale(T::of(0.25))
}

/// Replicate-padded 5-point Laplacian, per channel:
/// kernel `[[0,1,0],[1,−4,1],[0,1,0]]`.
pub fn laplacian<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let four = T::of(4.0);
    Tensor::from_fn(s, |n, c, y, xx| {
        let up = x.at(n, c, y.saturating_sub(1), xx);
        let down = x.at(n, c, (y + 1).min(s.h - 1), xx);
        let left = x.at(n, c, y, xx.saturating_sub(1));
        let right = x.at(n, c, y, (xx + 1).min(s.w - 1));
        up + down + left + right - four * x.at(n, c, y, xx)
    })
}

/// Adjoint of [`laplacian`]: each neighbour tap scatters back to the pixel
/// it was clamped to.
pub fn laplacian_adjoint<T: Float>(dy: &Tensor<T>) -> Tensor<T> {
    let s = dy.shape();
    let four = T::of(4.0);
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let g = dy.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                for x in 0..s.w {
                    let v = g[y * s.w + x];
                    dst[y * s.w + x] -= four * v;
                    dst[y.saturating_sub(1) * s.w + x] += v;
                    dst[(y + 1).min(s.h - 1) * s.w + x] += v;
                    dst[y * s.w + x.saturating_sub(1)] += v;
                    dst[y * s.w + (x + 1).min(s.w - 1)] += v;
                }
            }
        }
    }
    out
}

/// Composes a DO-Conv pair into one kernel.
///
/// `w` is `[Cout, D_mul, Cin, 1]`, `d` is `[Cin, Kh·Kw, D_mul, 1]`; the
/// result is `[Cout, Cin, kh, kw]` with
/// `kernel[o, i, s] = Σ_d w[o, d, i] · d[i, s, d]`.
pub fn doconv_compose<T: Float>(
    w: &Tensor<T>,
    d: &Tensor<T>,
    (kh, kw): (usize, usize),
) -> Result<Tensor<T>> {
    let (ws, ds) = (w.shape(), d.shape());
    let (cout, dmul, cin) = (ws.n, ws.c, ws.h);
    if ws.w != 1 || ds.w != 1 || ds.n != cin || ds.c != kh * kw || ds.h != dmul {
        return Err(Error::shape(
            "doconv_compose",
            format!("W {ws:?}, D {ds:?}, kernel {kh}×{kw}"),
        ));
    }
    if dmul < kh * kw {
        return Err(Error::Invalid(format!(
            "DO-Conv depth multiplier {dmul} below kernel area {}",
            kh * kw
        )));
    }
    let kk = kh * kw;
    let mut out = vec![T::zero(); cout * cin * kk];
    out.par_chunks_mut(cin * kk).enumerate().for_each(|(o, dst)| {
        for i in 0..cin {
            for s in 0..kk {
                let mut acc = T::zero();
                for m in 0..dmul {
                    acc += w.data()[(o * dmul + m) * cin + i] * d.data()[(i * kk + s) * dmul + m];
                }
                dst[i * kk + s] = acc;
            }
        }
    });
    Tensor::from_vec(Shape::new(cout, cin, kh, kw), out)
}

/// Gradients of [`doconv_compose`] with respect to `(w, d)` given the
/// cotangent of the composed kernel.
pub fn doconv_compose_grads<T: Float>(
    w: &Tensor<T>,
    d: &Tensor<T>,
    dk: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let (ws, ds) = (w.shape(), d.shape());
    let (cout, dmul, cin) = (ws.n, ws.c, ws.h);
    let kk = ds.c;
    let mut gw = Tensor::zeros(ws);
    let mut gd = Tensor::zeros(ds);
    for o in 0..cout {
        for m in 0..dmul {
            for i in 0..cin {
                let mut acc = T::zero();
                for s in 0..kk {
                    acc += dk.data()[(o * cin + i) * kk + s] * d.data()[(i * kk + s) * dmul + m];
                }
                gw.data_mut()[(o * dmul + m) * cin + i] = acc;
            }
        }
    }
    for i in 0..cin {
        for s in 0..kk {
            for m in 0..dmul {
                let mut acc = T::zero();
                for o in 0..cout {
                    acc += dk.data()[(o * cin + i) * kk + s] * w.data()[(o * dmul + m) * cin + i];
                }
                gd.data_mut()[(i * kk + s) * dmul + m] = acc;
            }
        }
    }
    (gw, gd)
}
