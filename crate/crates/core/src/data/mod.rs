//! Synthetic blur pairs, patch sampling, training and tiled inference.

pub mod kernel;
pub mod scene;
pub mod tiling;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use kernel::{blur, make_kernel, BlurKernel, KernelKind};
pub use scene::gen_scene;
pub use tiling::{tiled_inference, tiled_inference_with, TileLayout};
pub use train::{train, StepLog, TrainConfig, TrainState};

/// Mixes a base seed with a path of indices (splitmix64 finalizer), so
/// per-step, per-item seeds are independent of iteration order.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut z = base;
    for &p in path {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenePair {
    pub sharp: Tensor,
    pub blurry: Tensor,
    pub seed: u64,
    pub kernel: BlurKernel,
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    Motion,
    Gaussian,
    Mixed,
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Motion => "motion",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "motion" => Ok(KernelFamily::Motion),
            "gaussian" => Ok(KernelFamily::Gaussian),
            "mixed" => Ok(KernelFamily::Mixed),
            _ => Err(Error::Config(format!(
                "unknown kernel family `{s}` (expected motion, gaussian or mixed)"
            ))),
        }
    }
}

/// Recipe for a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub kernel: KernelFamily,
    pub motion_length: (f64, f64),
    pub sigma: (f64, f64),
    pub noise: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            count: 8,
            height: 256,
            width: 256,
            seed: 0,
            kernel: KernelFamily::Mixed,
            motion_length: (5.0, 15.0),
            sigma: (1.0, 2.5),
            noise: 0.01,
        }
    }
}

impl DataSpec {
    /// Seed of scene `i`; also the seed its sharp image is generated from.
    pub fn scene_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, &[i as u64])
    }

    pub fn pair(&self, i: usize) -> Result<ScenePair> {
        let seed = self.scene_seed(i);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
        let motion = match self.kernel {
            KernelFamily::Motion => true,
            KernelFamily::Gaussian => false,
            KernelFamily::Mixed => rng.gen_bool(0.5),
        };
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let kind = if motion {
            KernelKind::Motion {
                length: draw(&mut rng, self.motion_length),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
            }
        } else {
            KernelKind::Gaussian {
                sigma: draw(&mut rng, self.sigma),
            }
        };
        let kernel = make_kernel(kind)?;
        let sharp = gen_scene(seed, self.height, self.width)?;
        let blurry = blur(&sharp, &kernel, self.noise, derive_seed(seed, &[2]))?;
        Ok(ScenePair {
            sharp,
            blurry,
            seed,
            kernel,
            noise: self.noise,
        })
    }

    pub fn pairs(&self) -> Result<Vec<ScenePair>> {
        (0..self.count).map(|i| self.pair(i)).collect()
    }
}

/// Crop offset and flips of one training patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchPlan {
    pub y0: usize,
    pub x0: usize,
    pub hflip: bool,
    pub vflip: bool,
}

impl PatchPlan {
    pub fn draw(h: usize, w: usize, size: usize, seed: u64) -> Result<Self> {
        if h < size || w < size {
            return Err(Error::Invalid(format!(
                "image {h}×{w} is smaller than the {size}×{size} patch"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(PatchPlan {
            y0: rng.gen_range(0..=h - size),
            x0: rng.gen_range(0..=w - size),
            hflip: rng.gen_bool(0.5),
            vflip: rng.gen_bool(0.5),
        })
    }

    pub fn apply(&self, img: &Tensor, size: usize) -> Result<Tensor> {
        let c = img.crop(self.y0, self.x0, size, size)?;
        Ok(Tensor::from_fn(c.shape(), |n, ch, y, x| {
            let yy = if self.vflip { size - 1 - y } else { y };
            let xx = if self.hflip { size - 1 - x } else { x };
            c.at(n, ch, yy, xx)
        }))
    }
}

/// `(blurry, sharp)` patches cut with one shared crop and flip plan.
pub fn sample_patch(pair: &ScenePair, size: usize, seed: u64) -> Result<(Tensor, Tensor)> {
    let s = pair.sharp.shape();
    let plan = PatchPlan::draw(s.h, s.w, size, seed)?;
    Ok((plan.apply(&pair.blurry, size)?, plan.apply(&pair.sharp, size)?))
}
