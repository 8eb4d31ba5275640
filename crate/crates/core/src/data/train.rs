//! The training loop: Adam on the weighted multi-scale loss with a
//! cosine-annealed learning rate.
//!
//! Each step's batch is a pure function of `(seed, step)`: item `b` uses
//! pair `derive_seed(seed, [step, b]) mod count` and a patch plan drawn
//! from the same seed. Resuming from a saved state therefore replays
//! exactly the batches an uninterrupted run would see.

use std::collections::BTreeMap;

use crate::autodiff::{Exec, Graph};
use crate::data::{derive_seed, PatchPlan, ScenePair};
use crate::error::{Error, Result};
use crate::losses::{self, LossWeights, Reduction};
use crate::network::Model;
use crate::ops;
use crate::optim::{cosine_lr, AdamState, LR_MAX, LR_MIN};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub patch: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub seed: u64,
    pub reduction: Reduction,
    pub flips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch: 256,
            batch: 16,
            steps: 1000,
            lr_max: LR_MAX,
            lr_min: LR_MIN,
            seed: 0,
            reduction: Reduction::PixelMean,
            flips: true,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            reduction: self.reduction,
            ..LossWeights::default()
        }
    }
}

/// Everything needed to continue a run bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    /// Completed steps.
    pub step: usize,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        TrainState {
            model,
            adam: AdamState::default(),
            step: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub msc: f64,
    pub msed: f64,
    pub msfr: f64,
}

/// Multi-scale copies `x, ↓x, ↓↓x, …` of a batch.
pub fn pyramid(x: &Tensor, levels: usize) -> Result<Vec<Tensor>> {
    let mut v = vec![x.clone()];
    for k in 1..levels {
        let next = ops::downsample2(&v[k - 1])?;
        v.push(next);
    }
    Ok(v)
}

/// The `(blurry, sharp)` batch of step `step`.
pub fn batch_for_step(pairs: &[ScenePair], cfg: &TrainConfig, step: usize) -> Result<(Tensor, Tensor)> {
    if pairs.is_empty() {
        return Err(Error::Invalid("training needs at least one pair".into()));
    }
    let mut blurry = Vec::with_capacity(cfg.batch);
    let mut sharp = Vec::with_capacity(cfg.batch);
    for b in 0..cfg.batch {
        let s = derive_seed(cfg.seed, &[step as u64, b as u64]);
        let pair = &pairs[(s % pairs.len() as u64) as usize];
        let shape = pair.sharp.shape();
        let mut plan = PatchPlan::draw(shape.h, shape.w, cfg.patch, s)?;
        if !cfg.flips {
            plan.hflip = false;
            plan.vflip = false;
        }
        blurry.push(plan.apply(&pair.blurry, cfg.patch)?);
        sharp.push(plan.apply(&pair.sharp, cfg.patch)?);
    }
    Ok((Tensor::stack(&blurry)?, Tensor::stack(&sharp)?))
}

/// One optimizer step. The state is untouched if the loss or a gradient
/// is non-finite.
pub fn train_step(state: &mut TrainState, pairs: &[ScenePair], cfg: &TrainConfig) -> Result<StepLog> {
    let step = state.step;
    let levels = state.model.config.levels;
    if cfg.patch % state.model.config.divisor() != 0 {
        return Err(Error::Config(format!(
            "patch {} must be divisible by {}",
            cfg.patch,
            state.model.config.divisor()
        )));
    }
    let (blurry, sharp) = batch_for_step(pairs, cfg, step)?;
    let targets = pyramid(&sharp, levels)?;

    let mut g = Graph::new();
    let x = g.input(blurry);
    let preds = state.model.forward_graph(&mut g, x)?;
    let tvars: Vec<_> = targets.into_iter().map(|t| g.input(t)).collect();
    let parts = losses::total(&mut g, &preds, &tvars, &cfg.weights())?;
    let value = |v| g.value(&v).item() as f64;
    let log = StepLog {
        step,
        lr: cosine_lr(step, cfg.steps, cfg.lr_max, cfg.lr_min),
        loss: value(parts.total),
        msc: value(parts.msc),
        msed: value(parts.msed),
        msfr: value(parts.msfr),
    };
    let diverged = |detail: String| Error::Diverged {
        step,
        batch_seed: derive_seed(cfg.seed, &[step as u64]),
        detail,
    };
    if !log.loss.is_finite() {
        return Err(diverged(format!(
            "loss {} (msc {}, msed {}, msfr {})",
            log.loss, log.msc, log.msed, log.msfr
        )));
    }
    let grads = g.backward(parts.total)?;
    let named: BTreeMap<String, Tensor> = g
        .params()
        .iter()
        .map(|(name, v)| (name.clone(), grads.get(*v)))
        .collect();
    state
        .adam
        .step(&mut state.model.params, &named, log.lr)
        .map_err(|e| diverged(e.to_string()))?;
    state.step += 1;
    Ok(log)
}

/// Runs from `state.step` up to `cfg.steps`, calling `on_step` after each
/// completed step (for logging and periodic checkpoints).
pub fn train(
    state: &mut TrainState,
    pairs: &[ScenePair],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&TrainState, &StepLog) -> Result<()>,
) -> Result<Vec<StepLog>> {
    let mut logs = Vec::with_capacity(cfg.steps.saturating_sub(state.step));
    while state.step < cfg.steps {
        let log = train_step(state, pairs, cfg)?;
        on_step(state, &log)?;
        logs.push(log);
    }
    Ok(logs)
}
