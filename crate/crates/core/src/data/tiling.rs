//! Sliding-window inference.
//!
//! Along each axis, windows start at multiples of the step; if the last
//! one stops short of the border, one more window is placed flush with
//! the border. Every output pixel is taken from exactly one window: the
//! regular-grid window along an axis wins over the flush edge window, so
//! edge windows only contribute the strip the grid does not reach.

use crate::error::{Error, Result};
use crate::network::Model;
use crate::tensor::{Float, Shape, Tensor};

pub const WINDOW: usize = 256;

/// Window origins along one axis and the owner of every coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxisLayout {
    pub origins: Vec<usize>,
    /// Number of origins on the regular grid; a trailing flush origin
    /// follows them when present.
    pub regular: usize,
    len: usize,
    window: usize,
    step: usize,
}

impl AxisLayout {
    pub fn new(len: usize, window: usize, step: usize) -> Result<Self> {
        if window == 0 || step == 0 || step > window {
            return Err(Error::Invalid(format!(
                "tiling needs 0 < step ≤ window, got step {step}, window {window}"
            )));
        }
        if len < window {
            return Err(Error::Invalid(format!("axis of {len} is shorter than the {window} window")));
        }
        let mut origins: Vec<usize> = (0..).map(|i| i * step).take_while(|&o| o + window <= len).collect();
        let regular = origins.len();
        let reach = origins[regular - 1] + window;
        if reach < len {
            origins.push(len - window);
        }
        Ok(AxisLayout {
            origins,
            regular,
            len,
            window,
            step,
        })
    }

    /// Index into `origins` of the window that supplies coordinate `p`.
    pub fn owner(&self, p: usize) -> usize {
        debug_assert!(p < self.len);
        let reach = self.origins[self.regular - 1] + self.window;
        if p < reach {
            (p / self.step).min(self.regular - 1)
        } else {
            self.regular
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileLayout {
    pub window: usize,
    pub step: usize,
    pub rows: AxisLayout,
    pub cols: AxisLayout,
}

impl TileLayout {
    pub fn new(h: usize, w: usize, window: usize, step: usize) -> Result<Self> {
        Ok(TileLayout {
            window,
            step,
            rows: AxisLayout::new(h, window, step)?,
            cols: AxisLayout::new(w, window, step)?,
        })
    }

    /// `(y0, x0)` of every window, row-major.
    pub fn origins(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for &y in &self.rows.origins {
            for &x in &self.cols.origins {
                v.push((y, x));
            }
        }
        v
    }

    /// Origin of the window that supplies pixel `(y, x)`.
    pub fn owner(&self, y: usize, x: usize) -> (usize, usize) {
        (
            self.rows.origins[self.rows.owner(y)],
            self.cols.origins[self.cols.owner(x)],
        )
    }
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Extends `x` to at least `h × w` by mirroring past the bottom and right
/// borders.
fn reflect_pad<T: Float>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let s = x.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, h.max(s.h), w.max(s.w)), |n, c, y, xx| {
        x.at(n, c, reflect(y, s.h), reflect(xx, s.w))
    })
}

/// Full-resolution prediction assembled from `window × window` forward
/// passes. Inputs smaller than the window are reflect-padded and the
/// result cropped back.
pub fn tiled_inference_with<T: Float>(model: &Model<T>, image: &Tensor<T>, window: usize) -> Result<Tensor<T>> {
    let s = image.shape();
    if s.n != 1 {
        return Err(Error::shape("tiled_inference", format!("expected one image, got {s:?}")));
    }
    let d = model.config.divisor();
    if window % d != 0 {
        return Err(Error::Invalid(format!("window {window} must be divisible by {d}")));
    }
    let padded = if s.h < window || s.w < window {
        reflect_pad(image, window, window)
    } else {
        image.clone()
    };
    let ps = padded.shape();
    let layout = TileLayout::new(ps.h, ps.w, window, window)?;
    let mut out = Tensor::zeros(ps);
    for (y0, x0) in layout.origins() {
        let tile = padded.crop(y0, x0, window, window)?;
        let pred = model.forward(&tile)?.swap_remove(0);
        for c in 0..3 {
            for ty in 0..window {
                let y = y0 + ty;
                // columns this tile owns in row y form one contiguous run
                if layout.rows.origins[layout.rows.owner(y)] != y0 {
                    continue;
                }
                for tx in 0..window {
                    let x = x0 + tx;
                    if layout.cols.origins[layout.cols.owner(x)] == x0 {
                        out.set(0, c, y, x, pred.at(0, c, ty, tx));
                    }
                }
            }
        }
    }
    if ps == s {
        Ok(out)
    } else {
        out.crop(0, 0, s.h, s.w)
    }
}

/// [`tiled_inference_with`] at the default 256-pixel window.
pub fn tiled_inference<T: Float>(model: &Model<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    tiled_inference_with(model, image, WINDOW)
}
