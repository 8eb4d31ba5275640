//! Multi-input multi-output encoder-decoder.
//!
//! Level `k` runs at `1/2^k` resolution with `base·2^k` channels. The
//! encoder takes the full-resolution image at level 0 and, at every deeper
//! level, merges strided-conv features with shallow features (SCM) of the
//! downsampled image. Each decoder level fuses all encoder scales (AFF),
//! runs its block stack, and predicts a residual added to the input image
//! of that scale.
//!
//! Every layer is described once by [`layers`]; parameter creation, counts
//! and FLOP accounting all read that table.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Eager, Exec, Graph, Var};
use crate::blocks::{self, BlockKind, ConvKind};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Float, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetworkConfig {
    pub levels: usize,
    pub blocks_per_stage: usize,
    pub base_channels: usize,
    pub block_kind: BlockKind,
    pub conv_kind: ConvKind,
    pub seed: u64,
    /// Zero-initialize the output heads so a fresh model maps every input
    /// scale to itself.
    pub zero_heads: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::deeprft()
    }
}

impl NetworkConfig {
    /// 8 Res FFT-Conv blocks per stage, DO-Conv.
    pub fn deeprft() -> Self {
        NetworkConfig {
            levels: 3,
            blocks_per_stage: 8,
            base_channels: 32,
            block_kind: BlockKind::ResFftConv,
            conv_kind: ConvKind::DoConv,
            seed: 0,
            zero_heads: true,
        }
    }

    pub fn deeprft_small() -> Self {
        NetworkConfig {
            blocks_per_stage: 4,
            ..Self::deeprft()
        }
    }

    pub fn deeprft_plus() -> Self {
        NetworkConfig {
            blocks_per_stage: 20,
            ..Self::deeprft()
        }
    }

    /// The plain ResBlock baseline.
    pub fn mimo_unet() -> Self {
        NetworkConfig {
            block_kind: BlockKind::ResBlock,
            conv_kind: ConvKind::Plain,
            ..Self::deeprft()
        }
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Required divisor of input height and width.
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 8 {
            return Err(Error::Config(format!("levels must be in 1..=8, got {}", self.levels)));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::Config("blocks_per_stage must be ≥ 1".into()));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be ≥ 1".into()));
        }
        if self.levels > 1 && self.width(1) < 4 {
            return Err(Error::Config(format!(
                "base_channels {} too small for the shallow feature module (need level-1 width ≥ 4)",
                self.base_channels
            )));
        }
        Ok(())
    }

    /// Stable text form, also used as the checkpoint config snapshot.
    pub fn to_ini(&self) -> String {
        format!(
            "[network]\nlevels = {}\nblocks_per_stage = {}\nbase_channels = {}\nblock_kind = {}\nconv_kind = {}\nseed = {}\nzero_heads = {}\n",
            self.levels,
            self.blocks_per_stage,
            self.base_channels,
            self.block_kind.as_str(),
            self.conv_kind.as_str(),
            self.seed,
            self.zero_heads
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerOp {
    Conv,
    ConvTranspose,
    /// 1×1 conv over packed half-spectrum channels.
    FreqConv,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub op: LayerOp,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    /// Level of the layer's output (resolution `1/2^level`).
    pub level: usize,
    pub do_conv: bool,
    pub zero_init: bool,
}

impl LayerInfo {
    /// Scalars of the inference-form (folded) layer.
    pub fn params(&self) -> usize {
        self.cin * self.cout * self.k * self.k + self.cout
    }

    /// Scalars while training; DO-Conv adds the `D` factor and widens `W`
    /// to `D_mul = k²` rows.
    pub fn training_params(&self) -> usize {
        if self.do_conv {
            let kk = self.k * self.k;
            self.cout * kk * self.cin + self.cin * kk * kk + self.cout
        } else {
            self.params()
        }
    }
}

struct Table<'a> {
    cfg: &'a NetworkConfig,
    out: Vec<LayerInfo>,
}

impl Table<'_> {
    fn push(&mut self, name: String, op: LayerOp, cin: usize, cout: usize, k: usize, stride: usize, level: usize) {
        let do_conv = self.cfg.conv_kind == ConvKind::DoConv && op == LayerOp::Conv && k > 1;
        self.out.push(LayerInfo {
            name,
            op,
            cin,
            cout,
            k,
            stride,
            level,
            do_conv,
            zero_init: false,
        });
    }

    fn conv(&mut self, name: String, cin: usize, cout: usize, k: usize, level: usize) {
        self.push(name, LayerOp::Conv, cin, cout, k, 1, level);
    }

    fn blocks(&mut self, stage: &str, level: usize) {
        let c = self.cfg.width(level);
        for i in 0..self.cfg.blocks_per_stage {
            let p = format!("{stage}{level}.{i}");
            self.conv(format!("{p}.conv1"), c, c, 3, level);
            self.conv(format!("{p}.conv2"), c, c, 3, level);
            if self.cfg.block_kind == BlockKind::ResFftConv {
                self.push(format!("{p}.fft1"), LayerOp::FreqConv, 2 * c, 2 * c, 1, 1, level);
                self.push(format!("{p}.fft2"), LayerOp::FreqConv, 2 * c, 2 * c, 1, 1, level);
            }
        }
    }
}

/// Every layer of the network in creation order.
pub fn layers(cfg: &NetworkConfig) -> Vec<LayerInfo> {
    let kmax = cfg.levels;
    let mut t = Table { cfg, out: Vec::new() };
    t.conv("feat0".into(), 3, cfg.width(0), 3, 0);
    t.blocks("enc", 0);
    for k in 1..kmax {
        let c = cfg.width(k);
        t.push(format!("down{k}"), LayerOp::Conv, cfg.width(k - 1), c, 3, 2, k);
        t.conv(format!("scm{k}.0"), 3, c / 4, 3, k);
        t.conv(format!("scm{k}.1"), c / 4, c / 2, 1, k);
        t.conv(format!("scm{k}.2"), c / 2, c / 2, 3, k);
        t.conv(format!("scm{k}.3"), c / 2, c - 3, 1, k);
        t.conv(format!("scm{k}.fuse"), c, c, 1, k);
        t.conv(format!("fam{k}"), c, c, 3, k);
        t.blocks("enc", k);
    }
    let all: usize = (0..kmax).map(|k| cfg.width(k)).sum();
    for k in 0..kmax.saturating_sub(1) {
        let c = cfg.width(k);
        t.conv(format!("aff{k}.0"), all, c, 1, k);
        t.conv(format!("aff{k}.1"), c, c, 3, k);
    }
    for k in (0..kmax).rev() {
        let c = cfg.width(k);
        if k + 1 < kmax {
            t.conv(format!("merge{k}"), 2 * c, c, 1, k);
        }
        t.blocks("dec", k);
        t.conv(format!("head{k}"), c, 3, 3, k);
        if cfg.zero_heads {
            t.out.last_mut().expect("just pushed").zero_init = true;
        }
        if k > 0 {
            t.push(format!("up{k}"), LayerOp::ConvTranspose, c, cfg.width(k - 1), 4, 2, k - 1);
        }
    }
    t.out
}

/// Identifiers of every residual block, encoder first.
pub fn block_ids(cfg: &NetworkConfig) -> Vec<String> {
    let mut ids = Vec::new();
    for stage in ["enc", "dec"] {
        for k in 0..cfg.levels {
            for i in 0..cfg.blocks_per_stage {
                ids.push(format!("{stage}{k}.{i}"));
            }
        }
    }
    ids
}

/// Stream outputs captured from one block during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTap<T = f32> {
    pub block: String,
    pub input: Tensor<T>,
    pub res: Tensor<T>,
    pub fft: Option<Tensor<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    pub config: NetworkConfig,
    pub params: ParamStore<T>,
}

impl<T: Float> Model<T> {
    /// Deterministic in `config` (including its seed).
    pub fn build(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        for l in layers(&config) {
            match l.op {
                LayerOp::ConvTranspose => {
                    blocks::init_conv_transpose(&mut params, &l.name, l.cin, l.cout, l.k, &mut rng)?
                }
                LayerOp::Conv | LayerOp::FreqConv => {
                    let kind = if l.do_conv { ConvKind::DoConv } else { ConvKind::Plain };
                    blocks::init_conv(&mut params, &l.name, l.cin, l.cout, l.k, kind, l.zero_init, &mut rng)?
                }
            }
        }
        Ok(Model { config, params })
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// config (either folded or unfolded DO-Conv form is accepted).
    pub fn from_params(config: NetworkConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let fresh = Model::<T>::build(NetworkConfig {
            zero_heads: true,
            ..config.clone()
        })?;
        let folded = blocks::fold_store(&fresh.params)?;
        let matches = |reference: &ParamStore<T>| {
            reference.len() == params.len()
                && reference
                    .iter()
                    .all(|(n, t)| params.try_get(n).is_some_and(|p| p.shape() == t.shape()))
        };
        if !matches(&fresh.params) && !matches(&folded) {
            let missing: Vec<&str> = folded
                .names()
                .chain(fresh.params.names())
                .filter(|n| !params.contains(n))
                .take(3)
                .collect();
            return Err(Error::Format(format!(
                "parameters do not match the network config (e.g. missing {missing:?}, {} tensors given)",
                params.len()
            )));
        }
        Ok(Model { config, params })
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        layers(&self.config)
    }

    pub fn block_ids(&self) -> Vec<String> {
        block_ids(&self.config)
    }

    /// Inference-form parameter count (DO-Conv counted folded).
    pub fn param_count(&self) -> usize {
        self.layers().iter().map(LayerInfo::params).sum()
    }

    /// Scalars actually stored right now.
    pub fn stored_param_count(&self) -> usize {
        self.params.numel()
    }

    /// Training-form parameter count (DO-Conv counted as `W` plus `D`).
    pub fn training_param_count(&self) -> usize {
        self.layers().iter().map(LayerInfo::training_params).sum()
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn is_folded(&self) -> bool {
        !self.params.names().any(|n| n.ends_with(".D"))
    }

    /// Every DO-Conv replaced by its composed plain kernel. Folding a
    /// folded model is a no-op.
    pub fn fold_for_inference(&self) -> Result<Self> {
        Ok(Model {
            config: self.config.clone(),
            params: blocks::fold_store(&self.params)?,
        })
    }

    fn check_input(&self, s: crate::tensor::Shape) -> Result<()> {
        let d = self.config.divisor();
        if s.c != 3 {
            return Err(Error::shape("forward", format!("expected 3 input channels, got {s:?}")));
        }
        if s.h % d != 0 || s.w % d != 0 {
            return Err(Error::shape(
                "forward",
                format!(
                    "input {}×{} must have height and width divisible by {d} for {} levels",
                    s.h, s.w, self.config.levels
                ),
            ));
        }
        Ok(())
    }

    /// Predictions `Ŝ_0 .. Ŝ_{K−1}`, full resolution first.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_input(x.shape())?;
        let mut ex = Eager;
        let xv = ex.input(x.clone());
        Ok(forward_exec(&mut ex, self, xv, None)?.0)
    }

    /// Forward pass that also captures the streams of block `id`.
    pub fn forward_tapped(&self, x: &Tensor<T>, id: &str) -> Result<(Vec<Tensor<T>>, BlockTap<T>)> {
        self.check_input(x.shape())?;
        let ids = self.block_ids();
        if !ids.iter().any(|b| b == id) {
            return Err(Error::UnknownBlock {
                wanted: id.to_string(),
                available: ids.join(", "),
            });
        }
        let mut ex = Eager;
        let xv = ex.input(x.clone());
        let (outs, tap) = forward_exec(&mut ex, self, xv, Some(id))?;
        Ok((outs, tap.expect("block id validated")))
    }

    /// Records the forward pass on `g`; parameters are bound by name.
    pub fn forward_graph(&self, g: &mut Graph<T>, x: Var) -> Result<Vec<Var>> {
        self.check_input(g.value(&x).shape())?;
        Ok(forward_exec(g, self, x, None)?.0)
    }
}

fn resize<T: Float, E: Exec<T>>(ex: &mut E, x: &E::V, from: usize, to: usize) -> Result<E::V> {
    let mut v = x.clone();
    for _ in to..from {
        v = ex.upsample2(&v);
    }
    for _ in from..to {
        v = ex.downsample2(&v)?;
    }
    Ok(v)
}

fn relu_conv<T: Float, E: Exec<T>>(
    ex: &mut E,
    p: &ParamStore<T>,
    name: &str,
    x: &E::V,
    k: usize,
    stride: usize,
) -> Result<E::V> {
    let y = blocks::conv_layer(ex, p, name, x, stride, k / 2)?;
    Ok(ex.relu(&y))
}

/// The network written once against [`Exec`].
pub fn forward_exec<T: Float, E: Exec<T>>(
    ex: &mut E,
    model: &Model<T>,
    x: E::V,
    tap: Option<&str>,
) -> Result<(Vec<E::V>, Option<BlockTap<T>>)> {
    let cfg = &model.config;
    let p = &model.params;
    let kmax = cfg.levels;
    let mut captured = None;

    let mut stack = |ex: &mut E, stage: &str, level: usize, mut z: E::V| -> Result<E::V> {
        for i in 0..cfg.blocks_per_stage {
            let id = format!("{stage}{level}.{i}");
            let s = blocks::block_streams(ex, p, &id, &z)?;
            if tap == Some(id.as_str()) {
                captured = Some(BlockTap {
                    block: id,
                    input: ex.value(&z).clone(),
                    res: ex.value(&s.res).clone(),
                    fft: s.fft.as_ref().map(|f| ex.value(f).clone()),
                });
            }
            z = s.out;
        }
        Ok(z)
    };

    let mut pyramid = vec![x];
    for k in 1..kmax {
        let next = ex.downsample2(&pyramid[k - 1])?;
        pyramid.push(next);
    }

    let mut enc = Vec::with_capacity(kmax);
    let z = relu_conv(ex, p, "feat0", &pyramid[0], 3, 1)?;
    enc.push(stack(ex, "enc", 0, z)?);
    for k in 1..kmax {
        let z = relu_conv(ex, p, &format!("down{k}"), &enc[k - 1], 3, 2)?;
        // shallow features of the level-k image
        let mut s = relu_conv(ex, p, &format!("scm{k}.0"), &pyramid[k], 3, 1)?;
        s = relu_conv(ex, p, &format!("scm{k}.1"), &s, 1, 1)?;
        s = relu_conv(ex, p, &format!("scm{k}.2"), &s, 3, 1)?;
        s = relu_conv(ex, p, &format!("scm{k}.3"), &s, 1, 1)?;
        let s = ex.concat(&pyramid[k], &s)?;
        let s = blocks::conv_layer(ex, p, &format!("scm{k}.fuse"), &s, 1, 0)?;
        // feature attention merge: z + conv(z ⊙ s)
        let zs = ex.mul(&z, &s)?;
        let f = blocks::conv_layer(ex, p, &format!("fam{k}"), &zs, 1, 1)?;
        let z = ex.add(&z, &f)?;
        enc.push(stack(ex, "enc", k, z)?);
    }

    let mut fused = Vec::with_capacity(kmax.saturating_sub(1));
    for k in 0..kmax.saturating_sub(1) {
        let mut cat = resize(ex, &enc[0], 0, k)?;
        for (j, e) in enc.iter().enumerate().skip(1) {
            let r = resize(ex, e, j, k)?;
            cat = ex.concat(&cat, &r)?;
        }
        let a = relu_conv(ex, p, &format!("aff{k}.0"), &cat, 1, 1)?;
        fused.push(blocks::conv_layer(ex, p, &format!("aff{k}.1"), &a, 1, 1)?);
    }

    let mut outs: Vec<Option<E::V>> = vec![None; kmax];
    let mut z = enc[kmax - 1].clone();
    drop(enc);
    for k in (0..kmax).rev() {
        if k + 1 < kmax {
            let cat = ex.concat(&z, &fused[k])?;
            z = relu_conv(ex, p, &format!("merge{k}"), &cat, 1, 1)?;
        }
        z = stack(ex, "dec", k, z)?;
        let r = blocks::conv_layer(ex, p, &format!("head{k}"), &z, 1, 1)?;
        outs[k] = Some(ex.add(&r, &pyramid[k])?);
        if k > 0 {
            let up = blocks::conv_transpose_layer(ex, p, &format!("up{k}"), &z, 2, 1)?;
            z = ex.relu(&up);
        }
    }
    Ok((outs.into_iter().map(|o| o.expect("every level written")).collect(), captured))
}
