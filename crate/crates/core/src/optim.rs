//! Adam with bias correction and the cosine-annealed learning rate.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Float, Tensor};

/// Initial learning rate of the reference training recipe.
pub const LR_MAX: f64 = 2e-4;
/// Final learning rate of the reference training recipe.
pub const LR_MIN: f64 = 1e-6;

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·t/T))`. Steps past `T` stay at
/// `lr_min`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    let total = total.max(1);
    if t >= total {
        return lr_min;
    }
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * t as f64 / total as f64).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps.
    pub t: u64,
    pub moments: BTreeMap<String, Moments<T>>,
}

impl<T: Float> Default for AdamState<T> {
    fn default() -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: BTreeMap::new(),
        }
    }
}

impl<T: Float> AdamState<T> {
    /// One bias-corrected Adam update of every parameter that has a
    /// gradient. Rejects the whole step, leaving everything untouched, if a
    /// gradient is non-finite or mis-shaped.
    pub fn step(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &BTreeMap<String, Tensor<T>>,
        lr: f64,
    ) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate {lr}")));
        }
        for (name, g) in grads {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("`{name}` is {:?}, gradient {:?}", p.shape(), g.shape()),
                ));
            }
            g.ensure_finite(&format!("gradient of `{name}`"))?;
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one, eps, lr) = (T::one(), T::of(self.eps), T::of(lr));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let mo = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: Tensor::zeros(g.shape()),
                v: Tensor::zeros(g.shape()),
            });
            let pd = p.data_mut();
            let md = mo.m.data_mut();
            let vd = mo.v.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                md[i] = b1 * md[i] + (one - b1) * gi;
                vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
                let mhat = md[i] / c1;
                let vhat = vd[i] / c2;
                pd[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn cosine_schedule_endpoints() {
        let total = 1000;
        assert!((cosine_lr(0, total, LR_MAX, LR_MIN) - 2e-4).abs() < 1e-18);
        assert!((cosine_lr(total, total, LR_MAX, LR_MIN) - 1e-6).abs() < 1e-18);
        assert!((cosine_lr(total / 2, total, LR_MAX, LR_MIN) - (2e-4 + 1e-6) / 2.0).abs() < 1e-15);
        assert_eq!(cosine_lr(total + 5, total, LR_MAX, LR_MIN), LR_MIN);
    }

    fn store(v: f32) -> ParamStore<f32> {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(0.0);
        let mut st = AdamState::default();
        let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(1.0f32))]);
        st.step(&mut p, &grads, 0.1).unwrap();
        assert!((p.get("w").unwrap().item() + 0.1).abs() < 1e-6);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = store(0.75);
        let mut st = AdamState::default();
        let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(0.0f32))]);
        for k in 1..=50 {
            st.step(&mut p, &grads, 0.01).unwrap();
            assert_eq!(st.t, k);
        }
        assert_eq!(p.get("w").unwrap().item(), 0.75);
    }

    #[test]
    fn nan_gradient_rejects_step() {
        let mut p = store(1.0);
        let mut st = AdamState::default();
        let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(f32::NAN))]);
        assert!(matches!(st.step(&mut p, &grads, 0.1), Err(Error::NonFinite(_))));
        assert_eq!(st.t, 0);
        assert_eq!(p.get("w").unwrap().item(), 1.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = ParamStore::new();
            p.insert("a", Tensor::from_fn(Shape::new(2, 2, 2, 2), |n, c, y, x| (n + c + y + x) as f32 * 0.1)).unwrap();
            let mut st = AdamState::default();
            for k in 0..20 {
                let g = Tensor::from_fn(Shape::new(2, 2, 2, 2), |n, c, y, x| ((k + n * 3 + c + y * 5 + x) as f32).sin());
                st.step(&mut p, &BTreeMap::from([("a".to_string(), g)]), 1e-3).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
