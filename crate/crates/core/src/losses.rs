//! Multi-scale Charbonnier, edge and frequency-reconstruction losses.

use crate::autodiff::{Eager, Exec};
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// How the Charbonnier terms reduce over pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// `sqrt(‖d‖² + ε²)` per level: one global norm under one root.
    Literal,
    /// `mean(sqrt(d² + ε²))` per level; scale-free, used for training.
    PixelMean,
}

impl Reduction {
    pub fn as_str(self) -> &'static str {
        match self {
            Reduction::Literal => "literal",
            Reduction::PixelMean => "pixel_mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Reduction::Literal),
            "pixel_mean" => Ok(Reduction::PixelMean),
            _ => Err(Error::Config(format!(
                "unknown loss reduction `{s}` (expected literal or pixel_mean)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub eps: f64,
    pub reduction: Reduction,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1: 0.05,
            alpha2: 0.01,
            eps: 1e-3,
            reduction: Reduction::Literal,
        }
    }
}

impl LossWeights {
    pub fn training() -> Self {
        LossWeights {
            reduction: Reduction::PixelMean,
            ..Self::default()
        }
    }
}

/// The three terms and their weighted sum.
#[derive(Clone, Debug)]
pub struct LossParts<V> {
    pub msc: V,
    pub msed: V,
    pub msfr: V,
    pub total: V,
}

fn check_levels<V>(preds: &[V], targets: &[V]) -> Result<()> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Invalid(format!(
            "loss needs matching non-empty level lists, got {} predictions and {} targets",
            preds.len(),
            targets.len()
        )));
    }
    Ok(())
}

fn charbonnier<T: Float, E: Exec<T>>(ex: &mut E, d: &E::V, w: &LossWeights) -> E::V {
    let eps2 = T::of(w.eps * w.eps);
    let sq = ex.square(d);
    match w.reduction {
        Reduction::Literal => {
            let s = ex.sum(&sq);
            let s = ex.add_scalar(&s, eps2);
            ex.sqrt(&s)
        }
        Reduction::PixelMean => {
            let s = ex.add_scalar(&sq, eps2);
            let r = ex.sqrt(&s);
            ex.mean(&r)
        }
    }
}

fn sum_levels<T: Float, E: Exec<T>>(
    ex: &mut E,
    preds: &[E::V],
    targets: &[E::V],
    mut term: impl FnMut(&mut E, &E::V) -> Result<E::V>,
) -> Result<E::V> {
    check_levels(preds, targets)?;
    let mut total: Option<E::V> = None;
    for (p, t) in preds.iter().zip(targets) {
        let d = ex.sub(p, t)?;
        let v = term(ex, &d)?;
        total = Some(match total {
            None => v,
            Some(acc) => ex.add(&acc, &v)?,
        });
    }
    Ok(total.expect("at least one level"))
}

pub fn msc<T: Float, E: Exec<T>>(ex: &mut E, preds: &[E::V], targets: &[E::V], w: &LossWeights) -> Result<E::V> {
    sum_levels(ex, preds, targets, |ex, d| Ok(charbonnier(ex, d, w)))
}

/// Charbonnier of Laplacian differences; the Laplacian is linear, so it
/// is applied once to the difference.
pub fn msed<T: Float, E: Exec<T>>(ex: &mut E, preds: &[E::V], targets: &[E::V], w: &LossWeights) -> Result<E::V> {
    sum_levels(ex, preds, targets, |ex, d| {
        let l = ex.laplacian(d);
        Ok(charbonnier(ex, &l, w))
    })
}

/// Per level, `Σ |Δre| + |Δim|` over stored half-spectrum bins divided by
/// the number of bins.
pub fn msfr<T: Float, E: Exec<T>>(ex: &mut E, preds: &[E::V], targets: &[E::V]) -> Result<E::V> {
    sum_levels(ex, preds, targets, |ex, d| {
        let spec = ex.rfft2(d);
        let s = ex.shape(&spec);
        let bins = s.numel() / 2;
        let a = ex.abs(&spec);
        let total = ex.sum(&a);
        Ok(ex.scale(&total, T::of(1.0 / bins as f64)))
    })
}

pub fn total<T: Float, E: Exec<T>>(
    ex: &mut E,
    preds: &[E::V],
    targets: &[E::V],
    w: &LossWeights,
) -> Result<LossParts<E::V>> {
    let msc = msc(ex, preds, targets, w)?;
    let msed = msed(ex, preds, targets, w)?;
    let msfr = msfr(ex, preds, targets)?;
    let a = ex.scale(&msed, T::of(w.alpha1));
    let b = ex.scale(&msfr, T::of(w.alpha2));
    let t = ex.add(&msc, &a)?;
    let total = ex.add(&t, &b)?;
    Ok(LossParts { msc, msed, msfr, total })
}

fn eager<T: Float>(
    preds: &[Tensor<T>],
    targets: &[Tensor<T>],
    f: impl FnOnce(&mut Eager, &[Tensor<T>], &[Tensor<T>]) -> Result<Tensor<T>>,
) -> Result<T> {
    Ok(f(&mut Eager, preds, targets)?.item())
}

pub fn msc_loss<T: Float>(preds: &[Tensor<T>], targets: &[Tensor<T>], w: &LossWeights) -> Result<T> {
    eager(preds, targets, |ex, p, t| msc(ex, p, t, w))
}

pub fn msed_loss<T: Float>(preds: &[Tensor<T>], targets: &[Tensor<T>], w: &LossWeights) -> Result<T> {
    eager(preds, targets, |ex, p, t| msed(ex, p, t, w))
}

pub fn msfr_loss<T: Float>(preds: &[Tensor<T>], targets: &[Tensor<T>]) -> Result<T> {
    eager(preds, targets, msfr)
}

pub fn total_loss<T: Float>(preds: &[Tensor<T>], targets: &[Tensor<T>], w: &LossWeights) -> Result<T> {
    eager(preds, targets, |ex, p, t| Ok(total(ex, p, t, w)?.total))
}
