//! Central finite-difference checks of [`Graph`] gradients in `f64`.
//!
//! The numeric side only ever runs forward passes, so it shares nothing
//! with the backward code it checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Exec, Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates probed per input; larger tensors are subsampled.
    pub probes: usize,
    pub seed: u64,
    /// When set, each coordinate is also differenced with step `h/2`; if
    /// the two estimates disagree by more than this relative amount a kink
    /// (ReLU, `abs`) lies within the stencil and the coordinate is skipped
    /// rather than scored. Off by default.
    pub kink_tol: Option<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: 1e-4,
            probes: 48,
            seed: 0,
            kink_tol: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// `input[index]` of the worst coordinate.
    pub worst: String,
    pub checked: usize,
    /// Coordinates dropped by the kink screen.
    pub skipped: usize,
}

/// Relative error `|a − b| / max(|a|, |b|, floor)`. The floor is a small
/// fraction of the largest gradient of the same input, so coordinates with
/// vanishing gradient are judged on the input's own scale.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn eval(
    inputs: &[(&str, Tensor<f64>)],
    f: &impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> Result<(Graph<f64>, Vec<Var>, Var)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|(name, t)| g.param(name, t)).collect();
    let loss = f(&mut g, &vars)?;
    Ok((g, vars, loss))
}

/// Compares reverse-mode gradients of the scalar `f` with central
/// differences at every (sampled) coordinate of every input.
pub fn check_gradients(
    inputs: &[(&str, Tensor<f64>)],
    cfg: GradCheck,
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
) -> Result<GradReport> {
    let (g, vars, loss) = eval(inputs, &f)?;
    let grads = g.backward(loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
        skipped: 0,
    };
    for (k, (name, t)) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]);
        let scale = analytic.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-3 * scale).max(1e-8);
        let coords: Vec<usize> = if t.len() <= cfg.probes {
            (0..t.len()).collect()
        } else {
            sample(&mut rng, t.len(), cfg.probes).into_vec()
        };
        for i in coords {
            let mut shifted: Vec<(&str, Tensor<f64>)> = inputs.to_vec();
            shifted[k].1.data_mut()[i] = t.data()[i] + cfg.h;
            let (gp, _, lp) = eval(&shifted, &f)?;
            shifted[k].1.data_mut()[i] = t.data()[i] - cfg.h;
            let (gm, _, lm) = eval(&shifted, &f)?;
            let numeric = (gp.value(&lp).item() - gm.value(&lm).item()) / (2.0 * cfg.h);
            if let Some(tol) = cfg.kink_tol {
                let half = cfg.h / 2.0;
                shifted[k].1.data_mut()[i] = t.data()[i] + half;
                let (gp, _, lp) = eval(&shifted, &f)?;
                shifted[k].1.data_mut()[i] = t.data()[i] - half;
                let (gm, _, lm) = eval(&shifted, &f)?;
                let fine = (gp.value(&lp).item() - gm.value(&lm).item()) / (2.0 * half);
                if rel_err(numeric, fine, floor) > tol {
                    report.skipped += 1;
                    continue;
                }
            }
            let err = rel_err(analytic.data()[i], numeric, floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = report.max_rel_err.max(err);
                if err >= report.max_rel_err {
                    report.worst = format!(
                        "{name}[{i}]: analytic {} vs numeric {numeric}",
                        analytic.data()[i]
                    );
                }
            }
        }
    }
    Ok(report)
}
