//! ResBlock, Res FFT-Conv Block and DO-Conv.
//!
//! Layers live in a [`ParamStore`] under dotted names. A conv layer `L` is
//! either plain (`L.w`, `L.b`) or over-parameterized (`L.W`, `L.D`, `L.b`);
//! [`conv_layer`] dispatches on which tensors are present, so a folded
//! model runs through the same code as an unfolded one.
//!
//! The typed parameter bundles ([`ResBlockParams`], [`FreqConvParams`],
//! [`DoConvParams`]) are thin conveniences over the same store-based path.

use rand::Rng;

use crate::autodiff::{Eager, Exec};
use crate::error::{Error, Result};
use crate::ops;
use crate::params::ParamStore;
use crate::tensor::{Float, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    ResBlock,
    ResFftConv,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::ResBlock => "resblock",
            BlockKind::ResFftConv => "res_fft_conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "resblock" => Ok(BlockKind::ResBlock),
            "res_fft_conv" => Ok(BlockKind::ResFftConv),
            _ => Err(Error::Config(format!(
                "unknown block kind `{s}` (expected resblock or res_fft_conv)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvKind {
    Plain,
    DoConv,
}

impl ConvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConvKind::Plain => "plain",
            ConvKind::DoConv => "do_conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(ConvKind::Plain),
            "do_conv" => Ok(ConvKind::DoConv),
            _ => Err(Error::Config(format!(
                "unknown conv kind `{s}` (expected plain or do_conv)"
            ))),
        }
    }
}

fn key(name: &str, part: &str) -> String {
    format!("{name}.{part}")
}

/// Side length of the square kernel a DO-Conv `D` factor composes to.
fn doconv_side(d: Shape) -> Result<usize> {
    let k = (d.c as f64).sqrt().round() as usize;
    if k * k != d.c {
        return Err(Error::shape(
            "doconv",
            format!("D {d:?} does not describe a square kernel"),
        ));
    }
    Ok(k)
}

/// The (possibly composed) kernel of layer `name`.
pub fn layer_kernel<T: Float, E: Exec<T>>(
    ex: &mut E,
    store: &ParamStore<T>,
    name: &str,
) -> Result<E::V> {
    if let Some(w) = store.try_get(&key(name, "w")) {
        return Ok(ex.param(&key(name, "w"), w));
    }
    let (w, d) = (store.get(&key(name, "W"))?, store.get(&key(name, "D"))?);
    let k = doconv_side(d.shape())?;
    let wv = ex.param(&key(name, "W"), w);
    let dv = ex.param(&key(name, "D"), d);
    ex.doconv_kernel(&wv, &dv, k, k)
}

/// Applies conv layer `name` (plain or DO-Conv) with optional bias.
pub fn conv_layer<T: Float, E: Exec<T>>(
    ex: &mut E,
    store: &ParamStore<T>,
    name: &str,
    x: &E::V,
    stride: usize,
    pad: usize,
) -> Result<E::V> {
    let k = layer_kernel(ex, store, name)?;
    let b = store.try_get(&key(name, "b")).map(|b| ex.param(&key(name, "b"), b));
    ex.conv2d(x, &k, b.as_ref(), stride, pad)
}

/// Applies transposed conv layer `name` (always plain).
pub fn conv_transpose_layer<T: Float, E: Exec<T>>(
    ex: &mut E,
    store: &ParamStore<T>,
    name: &str,
    x: &E::V,
    stride: usize,
    pad: usize,
) -> Result<E::V> {
    let w = ex.param(&key(name, "w"), store.get(&key(name, "w"))?);
    let b = store.try_get(&key(name, "b")).map(|b| ex.param(&key(name, "b"), b));
    ex.conv_transpose2d(x, &w, b.as_ref(), stride, pad)
}

/// Fan-in bound `sqrt(1 / (cin·k·k))` shared by weights and biases.
pub fn init_bound(cin: usize, k: usize) -> f64 {
    (1.0 / (cin * k * k) as f64).sqrt()
}

/// Identity-composing depthwise factor: `D[i, s, d] = 1` iff `s == d`.
pub fn doconv_identity<T: Float>(cin: usize, kk: usize, dmul: usize) -> Tensor<T> {
    Tensor::from_fn(Shape::new(cin, kk, dmul, 1), |_, s, d, _| {
        if s == d {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// Creates conv layer `name` in `store`. DO-Conv is only used for kernels
/// larger than 1×1; the depth multiplier is the kernel area.
#[allow(clippy::too_many_arguments)]
pub fn init_conv<T: Float>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    kind: ConvKind,
    zero: bool,
    rng: &mut impl Rng,
) -> Result<()> {
    let bound = init_bound(cin, k);
    let draw = |shape: Shape, rng: &mut dyn rand::RngCore| -> Tensor<T> {
        if zero {
            Tensor::zeros(shape)
        } else {
            Tensor::from_fn(shape, |_, _, _, _| T::of(rng.gen_range(-bound..bound)))
        }
    };
    if kind == ConvKind::DoConv && k > 1 {
        let kk = k * k;
        store.insert(key(name, "W"), draw(Shape::new(cout, kk, cin, 1), rng))?;
        store.insert(key(name, "D"), doconv_identity(cin, kk, kk))?;
    } else {
        store.insert(key(name, "w"), draw(Shape::new(cout, cin, k, k), rng))?;
    }
    store.insert(key(name, "b"), draw(Shape::new(1, cout, 1, 1), rng))
}

/// Transposed-conv layer with a `[cin, cout, k, k]` kernel.
pub fn init_conv_transpose<T: Float>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let bound = init_bound(cout, k);
    let mut draw = |shape| Tensor::from_fn(shape, |_, _, _, _| T::of(rng.gen_range(-bound..bound)));
    store.insert(key(name, "w"), draw(Shape::new(cin, cout, k, k)))?;
    store.insert(key(name, "b"), draw(Shape::new(1, cout, 1, 1)))
}

/// Creates the parameters of one residual block of the given kind at
/// width `c` under `prefix`.
pub fn init_block<T: Float>(
    store: &mut ParamStore<T>,
    prefix: &str,
    c: usize,
    block: BlockKind,
    conv: ConvKind,
    rng: &mut impl Rng,
) -> Result<()> {
    init_conv(store, &key(prefix, "conv1"), c, c, 3, conv, false, rng)?;
    init_conv(store, &key(prefix, "conv2"), c, c, 3, conv, false, rng)?;
    if block == BlockKind::ResFftConv {
        init_conv(store, &key(prefix, "fft1"), 2 * c, 2 * c, 1, ConvKind::Plain, false, rng)?;
        init_conv(store, &key(prefix, "fft2"), 2 * c, 2 * c, 1, ConvKind::Plain, false, rng)?;
    }
    Ok(())
}

/// `conv2(relu(conv1(z)))` — the spatial stream without its skip.
pub fn spatial_stream<T: Float, E: Exec<T>>(
    ex: &mut E,
    store: &ParamStore<T>,
    prefix: &str,
    z: &E::V,
) -> Result<E::V> {
    let h = conv_layer(ex, store, &key(prefix, "conv1"), z, 1, 1)?;
    let h = ex.relu(&h);
    conv_layer(ex, store, &key(prefix, "conv2"), &h, 1, 1)
}

/// Y^fft: real 2-D FFT, `[re; im]` channels through 1×1 conv, ReLU, 1×1
/// conv, then the inverse transform back to the input width.
pub fn fft_stream<T: Float, E: Exec<T>>(
    ex: &mut E,
    store: &ParamStore<T>,
    prefix: &str,
    z: &E::V,
) -> Result<E::V> {
    let width = ex.shape(z).w;
    let spec = ex.rfft2(z);
    let f = conv_layer(ex, store, &key(prefix, "fft1"), &spec, 1, 0)?;
    let f = ex.relu(&f);
    let f = conv_layer(ex, store, &key(prefix, "fft2"), &f, 1, 0)?;
    ex.irfft2(&f, width)
}

/// Per-stream outputs of one block, kept for analysis taps.
pub struct Streams<V> {
    pub out: V,
    pub res: V,
    pub fft: Option<V>,
}

/// Runs a block and returns its output together with the stream values.
/// A ResBlock has no frequency stream.
pub fn block_streams<T: Float, E: Exec<T>>(
    ex: &mut E,
    store: &ParamStore<T>,
    prefix: &str,
    z: &E::V,
) -> Result<Streams<E::V>> {
    let res = spatial_stream(ex, store, prefix, z)?;
    let fft = if store.contains(&key(prefix, "fft1.w")) {
        Some(fft_stream(ex, store, prefix, z)?)
    } else {
        None
    };
    let mut out = ex.add(&res, z)?;
    if let Some(f) = &fft {
        out = ex.add(f, &out)?;
    }
    Ok(Streams { out, res, fft })
}

/// `Y = Y^fft + Y^res + Z` (Res FFT-Conv) or `Y = Y^res + Z` (ResBlock),
/// depending on what is stored under `prefix`.
pub fn block<T: Float, E: Exec<T>>(
    ex: &mut E,
    store: &ParamStore<T>,
    prefix: &str,
    z: &E::V,
) -> Result<E::V> {
    Ok(block_streams(ex, store, prefix, z)?.out)
}

// --- typed parameter bundles --------------------------------------------

/// One 3×3 (or general) conv with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T = f32> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Float> ConvParams<T> {
    fn insert(&self, store: &mut ParamStore<T>, name: &str) -> Result<()> {
        store.insert(key(name, "w"), self.w.clone())?;
        store.insert(key(name, "b"), self.b.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResBlockParams<T = f32> {
    pub conv1: ConvParams<T>,
    pub conv2: ConvParams<T>,
}

/// Θ⁽¹⁾ and Θ⁽²⁾: 1×1 maps over the `2C` packed spectrum channels.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqConvParams<T = f32> {
    pub theta1: ConvParams<T>,
    pub theta2: ConvParams<T>,
}

fn random_conv<T: Float>(cin: usize, cout: usize, k: usize, rng: &mut impl Rng) -> ConvParams<T> {
    let bound = init_bound(cin, k);
    let mut draw = |s| Tensor::from_fn(s, |_, _, _, _| T::of(rng.gen_range(-bound..bound)));
    ConvParams {
        w: draw(Shape::new(cout, cin, k, k)),
        b: draw(Shape::new(1, cout, 1, 1)),
    }
}

fn zero_conv<T: Float>(cin: usize, cout: usize, k: usize) -> ConvParams<T> {
    ConvParams {
        w: Tensor::zeros(Shape::new(cout, cin, k, k)),
        b: Tensor::zeros(Shape::new(1, cout, 1, 1)),
    }
}

impl<T: Float> ResBlockParams<T> {
    pub fn random(c: usize, rng: &mut impl Rng) -> Self {
        ResBlockParams {
            conv1: random_conv(c, c, 3, rng),
            conv2: random_conv(c, c, 3, rng),
        }
    }

    pub fn zeros(c: usize) -> Self {
        ResBlockParams {
            conv1: zero_conv(c, c, 3),
            conv2: zero_conv(c, c, 3),
        }
    }

    pub fn insert_into(&self, store: &mut ParamStore<T>, prefix: &str) -> Result<()> {
        self.conv1.insert(store, &key(prefix, "conv1"))?;
        self.conv2.insert(store, &key(prefix, "conv2"))
    }
}

impl<T: Float> FreqConvParams<T> {
    pub fn random(c: usize, rng: &mut impl Rng) -> Self {
        FreqConvParams {
            theta1: random_conv(2 * c, 2 * c, 1, rng),
            theta2: random_conv(2 * c, 2 * c, 1, rng),
        }
    }

    pub fn zeros(c: usize) -> Self {
        FreqConvParams {
            theta1: zero_conv(2 * c, 2 * c, 1),
            theta2: zero_conv(2 * c, 2 * c, 1),
        }
    }

    pub fn insert_into(&self, store: &mut ParamStore<T>, prefix: &str) -> Result<()> {
        self.theta1.insert(store, &key(prefix, "fft1"))?;
        self.theta2.insert(store, &key(prefix, "fft2"))
    }
}

/// `y = conv2(relu(conv1(z))) + z`.
pub fn res_block_forward<T: Float>(z: &Tensor<T>, p: &ResBlockParams<T>) -> Result<Tensor<T>> {
    let mut store = ParamStore::new();
    p.insert_into(&mut store, "blk")?;
    block(&mut Eager, &store, "blk", z)
}

/// Y^fft alone.
pub fn fft_stream_forward<T: Float>(z: &Tensor<T>, p: &FreqConvParams<T>) -> Result<Tensor<T>> {
    let mut store = ParamStore::new();
    p.insert_into(&mut store, "blk")?;
    fft_stream(&mut Eager, &store, "blk", z)
}

/// `Y = Y^fft + Y^res + Z` with exactly one identity path.
pub fn res_fft_block_forward<T: Float>(
    z: &Tensor<T>,
    spatial: &ResBlockParams<T>,
    freq: &FreqConvParams<T>,
) -> Result<Tensor<T>> {
    let mut store = ParamStore::new();
    spatial.insert_into(&mut store, "blk")?;
    freq.insert_into(&mut store, "blk")?;
    block(&mut Eager, &store, "blk", z)
}

/// Over-parameterized conv: `W` is `[Cout, D_mul, Cin, 1]`, `D` is
/// `[Cin, Kh·Kw, D_mul, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoConvParams<T = f32> {
    pub w: Tensor<T>,
    pub d: Tensor<T>,
    pub b: Tensor<T>,
    pub kh: usize,
    pub kw: usize,
}

impl<T: Float> DoConvParams<T> {
    /// Random `W` and bias, identity-composing `D`.
    pub fn random(cin: usize, cout: usize, k: usize, dmul: usize, rng: &mut impl Rng) -> Result<Self> {
        let kk = k * k;
        if dmul < kk {
            return Err(Error::Invalid(format!(
                "DO-Conv depth multiplier {dmul} below kernel area {kk}"
            )));
        }
        let bound = init_bound(cin, k);
        let mut draw = |s| Tensor::from_fn(s, |_, _, _, _| T::of(rng.gen_range(-bound..bound)));
        Ok(DoConvParams {
            w: draw(Shape::new(cout, dmul, cin, 1)),
            b: draw(Shape::new(1, cout, 1, 1)),
            d: doconv_identity(cin, kk, dmul),
            kh: k,
            kw: k,
        })
    }

    pub fn insert_into(&self, store: &mut ParamStore<T>, name: &str) -> Result<()> {
        if self.kh != self.kw {
            return Err(Error::Invalid("DO-Conv layers in a store must be square".into()));
        }
        store.insert(key(name, "W"), self.w.clone())?;
        store.insert(key(name, "D"), self.d.clone())?;
        store.insert(key(name, "b"), self.b.clone())
    }
}

/// Collapses `(W, D)` into one `[Cout, Cin, Kh, Kw]` kernel; the bias is
/// passed through.
pub fn doconv_fold<T: Float>(p: &DoConvParams<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((ops::doconv_compose(&p.w, &p.d, (p.kh, p.kw))?, p.b.clone()))
}

/// Convolution with the composed kernel; the unfolded training-time path.
pub fn doconv_forward<T: Float>(
    x: &Tensor<T>,
    p: &DoConvParams<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let mut ex = Eager;
    let k = ex.doconv_kernel(&p.w, &p.d, p.kh, p.kw)?;
    ex.conv2d(x, &k, Some(&p.b), stride, pad)
}

/// Replaces every `(L.W, L.D)` pair in `store` with the folded `L.w`.
/// Stores without DO-Conv layers are returned unchanged.
pub fn fold_store<T: Float>(store: &ParamStore<T>) -> Result<ParamStore<T>> {
    let mut out = ParamStore::new();
    for (name, t) in store.iter() {
        if let Some(layer) = name.strip_suffix(".W") {
            let d = store.get(&key(layer, "D"))?;
            let k = doconv_side(d.shape())?;
            out.insert(key(layer, "w"), ops::doconv_compose(t, d, (k, k))?)?;
        } else if !name.ends_with(".D") {
            out.insert(name, t.clone())?;
        }
    }
    Ok(out)
}
