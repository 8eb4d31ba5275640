//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use deeprft::autodiff::{Exec, Graph, Var};
use deeprft::blocks::{self, BlockKind, ConvKind};
use deeprft::gradcheck::{check_gradients, GradCheck};
use deeprft::losses::{self, LossWeights, Reduction};
use deeprft::network::{Model, NetworkConfig};
use deeprft::{ParamStore, Result, Shape, Tensor};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform<T: deeprft::Float>(s: Shape, lo: f64, hi: f64, seed: u64) -> Tensor<T> {
    Tensor::uniform(s, lo, hi, &mut rng(seed))
}

/// `X[u, v] = Σ_y Σ_x x[y, x] e^{−j2π(uy/H + vx/W)}`, evaluated term by term.
pub fn dft2_naive(plane: &[f64], h: usize, w: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let ph = -2.0 * std::f64::consts::PI * (((u * y) % h) as f64 / h as f64 + ((v * x) % w) as f64 / w as f64);
                    acc += plane[y * w + x] * Complex::new(ph.cos(), ph.sin());
                }
            }
            out[u * w + v] = acc;
        }
    }
    out
}

// --- gradient suite -----------------------------------------------------

pub const GRAD_SEEDS: u64 = 20;
/// Tolerance for composite blocks, losses and the network.
pub const GRAD_TOL: f64 = 1e-3;
/// Tolerance for single elementwise ops.
pub const GRAD_TOL_ELEMENTWISE: f64 = 1e-4;

fn cfg(seed: u64) -> GradCheck {
    GradCheck {
        h: 1e-5,
        probes: 24,
        seed,
        kink_tol: None,
    }
}

fn named(store: &ParamStore<f64>) -> Vec<(String, Tensor<f64>)> {
    store.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Gradient check of `loss(block(z))` with every parameter and `z` as
/// inputs. The loss weights the output by a fixed random field so no
/// symmetry hides a wrong sign.
fn check_store(store: ParamStore<f64>, z: Tensor<f64>, seed: u64, f: impl Fn(&mut Graph<f64>, &ParamStore<f64>, Var) -> Result<Var>) -> f64 {
    let mut inputs = named(&store);
    let zshape = z.shape();
    inputs.push(("z".into(), z));
    let refs: Vec<(&str, Tensor<f64>)> = inputs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let names: Vec<String> = inputs.iter().map(|(k, _)| k.clone()).collect();
    let report = check_gradients(&refs, cfg(seed), |g, vars| {
        let mut st = ParamStore::new();
        for (i, n) in names.iter().enumerate().take(names.len() - 1) {
            st.insert(n.clone(), g.value(&vars[i]).clone())?;
        }
        let y = f(g, &st, vars[vars.len() - 1])?;
        let ys = g.shape(&y);
        let r = g.input(uniform(ys, -1.0, 1.0, seed + 999));
        let p = g.mul(&y, &r)?;
        let sq = g.square(&y);
        let t = g.add(&p, &sq)?;
        Ok(g.sum(&t))
    })
    .expect("gradient check runs");
    let _ = zshape;
    report.max_rel_err
}

fn perturb_d(store: &mut ParamStore<f64>, seed: u64) {
    let names: Vec<String> = store.names().filter(|n| n.ends_with(".D")).map(String::from).collect();
    for n in names {
        let d = store.get(&n).unwrap().clone();
        let noise: Tensor<f64> = uniform(d.shape(), -0.3, 0.3, seed);
        store.replace(&n, d.zip_map(&noise, |a, b| a + b).unwrap()).unwrap();
    }
}

fn block_store(seed: u64, kind: BlockKind, conv: ConvKind, c: usize) -> ParamStore<f64> {
    let mut store = ParamStore::new();
    blocks::init_block(&mut store, "b", c, kind, conv, &mut rng(seed)).unwrap();
    perturb_d(&mut store, seed + 1);
    store
}

pub fn grad_resblock(seed: u64) -> f64 {
    let c = 2 + (seed % 2) as usize;
    let store = block_store(seed, BlockKind::ResBlock, ConvKind::Plain, c);
    let z = uniform(Shape::new(1, c, 6, 5), -1.0, 1.0, seed + 10);
    check_store(store, z, seed, |g, st, z| blocks::block(g, st, "b", &z))
}

pub fn grad_fft_stream(seed: u64) -> f64 {
    let c = 2;
    let store = block_store(seed, BlockKind::ResFftConv, ConvKind::Plain, c);
    let (h, w) = [(6, 5), (6, 6), (4, 7), (5, 8)][(seed % 4) as usize];
    let z = uniform(Shape::new(1, c, h, w), -1.0, 1.0, seed + 20);
    check_store(store, z, seed, |g, st, z| blocks::fft_stream(g, st, "b", &z))
}

pub fn grad_res_fft_block(seed: u64) -> f64 {
    let c = 2;
    let store = block_store(seed, BlockKind::ResFftConv, ConvKind::DoConv, c);
    let z = uniform(Shape::new(1, c, 6, 5), -1.0, 1.0, seed + 30);
    check_store(store, z, seed, |g, st, z| blocks::block(g, st, "b", &z))
}

pub fn grad_doconv(seed: u64) -> f64 {
    let mut r = rng(seed + 40);
    let (cin, cout) = (r.gen_range(1..4), r.gen_range(1..4));
    let stride = if seed % 3 == 0 { 2 } else { 1 };
    let mut store = ParamStore::new();
    blocks::init_conv(&mut store, "d", cin, cout, 3, ConvKind::DoConv, false, &mut r).unwrap();
    perturb_d(&mut store, seed + 41);
    let z = uniform(Shape::new(1, cin, 6, 6), -1.0, 1.0, seed + 42);
    check_store(store, z, seed, move |g, st, z| blocks::conv_layer(g, st, "d", &z, stride, 1))
}

fn loss_levels(seed: u64) -> (Vec<Tensor<f64>>, Vec<Tensor<f64>>) {
    let shapes = [Shape::new(1, 3, 8, 6), Shape::new(1, 3, 4, 3)];
    let p = shapes.iter().enumerate().map(|(i, &s)| uniform(s, 0.0, 1.0, seed * 7 + i as u64)).collect();
    let t = shapes.iter().enumerate().map(|(i, &s)| uniform(s, 0.0, 1.0, seed * 7 + 100 + i as u64)).collect();
    (p, t)
}

fn grad_loss(seed: u64, which: fn(&mut Graph<f64>, &[Var], &[Var], &LossWeights) -> Result<Var>) -> f64 {
    let (p, t) = loss_levels(seed);
    let reduction = if seed % 2 == 0 { Reduction::Literal } else { Reduction::PixelMean };
    let w = LossWeights { reduction, ..LossWeights::default() };
    let inputs = [("p0", p[0].clone()), ("p1", p[1].clone())];
    check_gradients(&inputs, cfg(seed), |g, vars| {
        let tv: Vec<Var> = t.iter().map(|x| g.input(x.clone())).collect();
        which(g, vars, &tv, &w)
    })
    .expect("gradient check runs")
    .max_rel_err
}

pub fn grad_msc(seed: u64) -> f64 {
    grad_loss(seed, |g, p, t, w| losses::msc(g, p, t, w))
}

pub fn grad_msed(seed: u64) -> f64 {
    grad_loss(seed, |g, p, t, w| losses::msed(g, p, t, w))
}

pub fn grad_msfr(seed: u64) -> f64 {
    grad_loss(seed, |g, p, t, _| losses::msfr(g, p, t))
}

pub fn micro_config(seed: u64) -> NetworkConfig {
    NetworkConfig {
        levels: 2,
        blocks_per_stage: 1,
        base_channels: 4,
        seed,
        zero_heads: false,
        ..NetworkConfig::deeprft()
    }
}

/// End to end: input image plus a seed-dependent subset of parameter
/// tensors (covering each layer family) through the total loss.
/// ReLU and the L1 frequency term make the loss piecewise smooth, so the
/// probes whose stencil straddles a kink are screened out.
pub fn grad_network(seed: u64) -> f64 {
    grad_network_h(seed, 1e-5).0
}

pub fn grad_network_h(seed: u64, h: f64) -> (f64, String) {
    grad_network_with(seed, h, LossWeights::default())
}

pub fn grad_network_with(seed: u64, h: f64, w: LossWeights) -> (f64, String) {
    let mut model = Model::<f64>::build(micro_config(seed)).unwrap();
    perturb_d(&mut model.params, seed + 50);
    let x: Tensor<f64> = uniform(Shape::new(1, 3, 16, 16), 0.0, 1.0, seed + 51);
    let targets: Vec<Tensor<f64>> = vec![
        uniform(Shape::new(1, 3, 16, 16), 0.0, 1.0, seed + 52),
        uniform(Shape::new(1, 3, 8, 8), 0.0, 1.0, seed + 53),
    ];
    let families = ["feat0.", "enc0.0.conv", "enc0.0.fft", "down1.", "scm1.", "fam1.", "aff0.", "merge0.", "dec1.0.", "head", "up1."];
    let mut r = rng(seed + 54);
    let mut chosen = Vec::new();
    for fam in families {
        let names: Vec<&str> = model.params.names().filter(|n| n.starts_with(fam)).collect();
        if !names.is_empty() {
            chosen.push(names[r.gen_range(0..names.len())].to_string());
        }
    }
    let mut inputs: Vec<(String, Tensor<f64>)> = chosen.iter().map(|n| (n.clone(), model.params.get(n).unwrap().clone())).collect();
    inputs.push(("x".into(), x));
    let refs: Vec<(&str, Tensor<f64>)> = inputs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    let check = GradCheck { probes: 6, h, kink_tol: Some(1e-4), ..cfg(seed) };
    check_gradients(&refs, check, |g, vars| {
        // parameters registered above under their store names take
        // precedence over the model's copies
        let x = vars[vars.len() - 1];
        let preds = model.forward_graph(g, x)?;
        let tv: Vec<Var> = targets.iter().map(|t| g.input(t.clone())).collect();
        Ok(losses::total(g, &preds, &tv, &w)?.total)
    })
    .map(|r| {
        // a screen that drops most probes would pass vacuously
        let err = if 4 * r.skipped > r.checked + r.skipped { f64::INFINITY } else { r.max_rel_err };
        (err, format!("{} ({} of {} probes straddled a kink)", r.worst, r.skipped, r.checked + r.skipped))
    })
    .expect("gradient check runs")
}

/// Single elementwise / structural ops, each composed with a random
/// weighting so the cotangent is not uniform.
pub fn grad_elementwise(seed: u64) -> Vec<(&'static str, f64)> {
    let s = Shape::new(1, 2, 4, 6);
    let a: Tensor<f64> = uniform(s, -1.0, 1.0, seed + 60);
    let pos: Tensor<f64> = uniform(s, 0.2, 1.5, seed + 61);
    let b: Tensor<f64> = uniform(s, -1.0, 1.0, seed + 62);
    type Op = fn(&mut Graph<f64>, Var, Var) -> Result<Var>;
    let ops: [(&str, bool, Op); 12] = [
        ("relu", false, |g, x, _| Ok(g.relu(&x))),
        ("square", false, |g, x, _| Ok(g.square(&x))),
        ("sqrt", true, |g, x, _| Ok(g.sqrt(&x))),
        ("abs", false, |g, x, _| Ok(g.abs(&x))),
        ("mul", false, |g, x, y| g.mul(&x, &y)),
        ("add", false, |g, x, y| g.add(&x, &y)),
        ("sub", false, |g, x, y| g.sub(&x, &y)),
        ("scale", false, |g, x, _| Ok(g.scale(&x, 0.37))),
        ("add_scalar", false, |g, x, _| Ok(g.add_scalar(&x, -0.2))),
        ("mean", false, |g, x, _| Ok(g.mean(&x))),
        ("laplacian", false, |g, x, _| Ok(g.laplacian(&x))),
        ("downsample2", false, |g, x, _| g.downsample2(&x)),
    ];
    let mut out = Vec::new();
    for (name, positive, op) in ops {
        let x = if positive { pos.clone() } else { a.clone() };
        let inputs = [("x", x), ("y", b.clone())];
        let rep = check_gradients(&inputs, cfg(seed), |g, v| {
            let y = op(g, v[0], v[1])?;
            let r = g.input(uniform(g.shape(&y), -1.0, 1.0, seed + 63));
            let p = g.mul(&y, &r)?;
            Ok(g.sum(&p))
        })
        .expect("gradient check runs");
        out.push((name, rep.max_rel_err));
    }
    out
}

/// Worst error over `GRAD_SEEDS` seeds.
pub fn worst(f: fn(u64) -> f64) -> f64 {
    (0..GRAD_SEEDS).map(f).fold(0.0, f64::max)
}

// --- spectral -----------------------------------------------------------

#[derive(Debug, Default, Clone, Copy)]
pub struct FftErrors {
    /// rfft2 (f32) against the literal double-sum DFT (f64).
    pub dft: f64,
    /// irfft2 ∘ rfft2 against the input.
    pub round_trip: f64,
    /// `|X[(H−u)%H, (W−v)%W] − conj X[u, v]|` over the full f32 spectrum.
    pub conjugate: f64,
}

/// Full complex 2-D transform of a real plane via the library's 1-D FFT.
pub fn fft2_full(plane: &[f32], h: usize, w: usize) -> Vec<Complex<f32>> {
    let (rf, cf) = (deeprft::spectral::Fft::<f32>::new(w), deeprft::spectral::Fft::<f32>::new(h));
    let mut buf: Vec<Complex<f32>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    for row in buf.chunks_mut(w) {
        rf.forward(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for v in 0..w {
        for u in 0..h {
            col[u] = buf[u * w + v];
        }
        cf.forward(&mut col);
        for u in 0..h {
            buf[u * w + v] = col[u];
        }
    }
    buf
}

/// Random real inputs with each side drawn from `1..=max_side`.
pub fn fft_errors(cases: usize, max_side: usize, seed: u64) -> FftErrors {
    let mut r = rng(seed);
    let mut e = FftErrors::default();
    for case in 0..cases {
        let (n, c) = (r.gen_range(1..=2), r.gen_range(1..=2));
        let (h, w) = (r.gen_range(1..=max_side), r.gen_range(1..=max_side));
        let x: Tensor<f32> = uniform(Shape::new(n, c, h, w), -1.0, 1.0, seed * 1000 + case as u64);
        let spec = deeprft::spectral::rfft2(&x);
        let wf = w / 2 + 1;
        for ni in 0..n {
            for ci in 0..c {
                let plane: Vec<f64> = x.plane(ni, ci).iter().map(|&v| v as f64).collect();
                let oracle = dft2_naive(&plane, h, w);
                for u in 0..h {
                    for v in 0..wf {
                        let got = spec.bin(ni, ci, u, v);
                        let d = Complex::new(got.re as f64, got.im as f64) - oracle[u * w + v];
                        e.dft = e.dft.max(d.norm());
                    }
                }
                let full = fft2_full(x.plane(ni, ci), h, w);
                for u in 0..h {
                    for v in 0..w {
                        let d = full[((h - u) % h) * w + (w - v) % w] - full[u * w + v].conj();
                        e.conjugate = e.conjugate.max(d.norm() as f64);
                    }
                }
            }
        }
        let back = deeprft::spectral::irfft2(&spec).unwrap();
        let rt = back.data().iter().zip(x.data()).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max);
        e.round_trip = e.round_trip.max(rt);
    }
    e
}

pub const FFT_CASES: usize = 100;
pub const FFT_DFT_TOL: f64 = 1e-4;
pub const FFT_ROUND_TRIP_TOL: f64 = 1e-5;
pub const FFT_CONJ_TOL: f64 = 1e-4;

// --- DO-Conv folding ------------------------------------------------------

/// Training-time DO-Conv evaluated by feature composition: every input
/// patch is first mixed by the depthwise `D`, then contracted with `W`.
/// Zero padding, square `k`.
pub fn doconv_unfolded_oracle(x: &Tensor<f64>, w: &Tensor<f64>, d: &Tensor<f64>, b: &Tensor<f64>, k: usize, stride: usize, pad: usize) -> Tensor<f64> {
    let (xs, ws) = (x.shape(), w.shape());
    let (cout, dmul, cin) = (ws.n, ws.c, ws.h);
    let kk = k * k;
    let oh = (xs.h + 2 * pad - k) / stride + 1;
    let ow = (xs.w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(Shape::new(xs.n, cout, oh, ow));
    let mut patch = vec![0.0; cin * kk];
    let mut mixed = vec![0.0; cin * dmul];
    for n in 0..xs.n {
        for oy in 0..oh {
            for ox in 0..ow {
                for i in 0..cin {
                    for s in 0..kk {
                        let y = (oy * stride + s / k) as isize - pad as isize;
                        let xx = (ox * stride + s % k) as isize - pad as isize;
                        let inside = y >= 0 && xx >= 0 && (y as usize) < xs.h && (xx as usize) < xs.w;
                        patch[i * kk + s] = if inside { x.at(n, i, y as usize, xx as usize) } else { 0.0 };
                    }
                    for m in 0..dmul {
                        mixed[i * dmul + m] = (0..kk).map(|s| d.at(i, s, m, 0) * patch[i * kk + s]).sum();
                    }
                }
                for o in 0..cout {
                    let mut acc = b.data()[o];
                    for m in 0..dmul {
                        for i in 0..cin {
                            acc += w.at(o, m, i, 0) * mixed[i * dmul + m];
                        }
                    }
                    out.set(n, o, oy, ox, acc);
                }
            }
        }
    }
    out
}

/// Max |folded f32 conv − unfolded f64 oracle| over random DO-Conv layers
/// with non-identity `D`.
pub fn doconv_fold_error(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let (cin, cout) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let k = if case % 4 == 3 { 5 } else { 3 };
        let stride = r.gen_range(1..=2);
        let pad = k / 2;
        let mut p = blocks::DoConvParams::<f64>::random(cin, cout, k, k * k, &mut r).unwrap();
        let noise: Tensor<f64> = uniform(p.d.shape(), -0.5, 0.5, seed * 100 + 50 + case as u64);
        p.d = p.d.zip_map(&noise, |a, b| a + b).unwrap();
        let x: Tensor<f64> = uniform(Shape::new(1, cin, r.gen_range(k..12), r.gen_range(k..12)), -1.0, 1.0, seed * 100 + case as u64);
        let want = doconv_unfolded_oracle(&x, &p.w, &p.d, &p.b, k, stride, pad);
        let p32 = blocks::DoConvParams::<f32> { w: p.w.cast(), d: p.d.cast(), b: p.b.cast(), kh: k, kw: k };
        let (kernel, bias) = blocks::doconv_fold(&p32).unwrap();
        let got = deeprft::ops::conv2d(&x.cast::<f32>(), &kernel, Some(&bias), stride, pad).unwrap();
        let err = got.cast::<f64>().max_abs_diff(&want).unwrap();
        worst = worst.max(err);
    }
    worst
}

pub fn perturb_all_d(model: &mut Model<f32>, seed: u64) {
    let names: Vec<String> = model.params.names().filter(|n| n.ends_with(".D")).map(String::from).collect();
    for (i, n) in names.into_iter().enumerate() {
        let d = model.params.get(&n).unwrap();
        let noise: Tensor<f32> = uniform(d.shape(), -0.2, 0.2, seed * 1000 + i as u64);
        let d = d.zip_map(&noise, |a, b| a + b).unwrap();
        model.params.replace(&n, d).unwrap();
    }
}

/// Max |forward − folded forward| over all output scales.
/// Heads are always randomly initialized; zero heads would make both
/// models the identity.
pub fn network_fold_error(cfg: NetworkConfig, side: usize, seed: u64) -> f64 {
    let mut model = Model::<f32>::build(NetworkConfig { zero_heads: false, ..cfg }).unwrap();
    perturb_all_d(&mut model, seed);
    let folded = model.fold_for_inference().unwrap();
    let x: Tensor<f32> = uniform(Shape::new(1, 3, side, side), 0.0, 1.0, seed + 1);
    let a = model.forward(&x).unwrap();
    let b = folded.forward(&x).unwrap();
    assert!(a[0].max_abs_diff(&x).unwrap() > 1e-3, "fold check on an identity network proves nothing");
    a.iter().zip(&b).map(|(p, q)| p.max_abs_diff(q).unwrap() as f64).fold(0.0, f64::max)
}

pub const FOLD_CASES: usize = 50;
pub const FOLD_TOL: f64 = 1e-5;

// --- model size -----------------------------------------------------------

/// `(name, config, published parameter count)`.
pub fn param_targets() -> Vec<(&'static str, NetworkConfig, f64)> {
    vec![
        ("DeepRFT-small", NetworkConfig::deeprft_small(), 5.1e6),
        ("DeepRFT", NetworkConfig::deeprft(), 9.6e6),
        ("DeepRFT+", NetworkConfig::deeprft_plus(), 23.0e6),
        ("MIMO-UNet", NetworkConfig::mimo_unet(), 6.8e6),
    ]
}

/// `(name, config, published MACs at 256×256)`.
pub fn mac_targets() -> Vec<(&'static str, NetworkConfig, f64)> {
    vec![
        ("DeepRFT-small", NetworkConfig::deeprft_small(), 44.60e9),
        ("DeepRFT", NetworkConfig::deeprft(), 80.21e9),
        ("DeepRFT+", NetworkConfig::deeprft_plus(), 187.04e9),
    ]
}

// --- tiling -----------------------------------------------------------------

/// A fresh zero-head model is the identity on its full-resolution output.
pub fn identity_model(seed: u64) -> Model<f32> {
    Model::build(NetworkConfig {
        levels: 3,
        blocks_per_stage: 1,
        base_channels: 4,
        seed,
        zero_heads: true,
        ..NetworkConfig::deeprft()
    })
    .unwrap()
}

/// Random `(h, w)` with both sides in `[lo, hi]`.
pub fn random_sizes(count: usize, lo: usize, hi: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut r = rng(seed);
    (0..count).map(|_| (r.gen_range(lo..=hi), r.gen_range(lo..=hi))).collect()
}

// --- blur in frequency --------------------------------------------------------

pub const BLUR_BANDS: [(f64, f64); 2] = [(0.0, 0.5), (0.5, 1.0)];

#[derive(Debug, Clone, Copy)]
pub struct BlurBands {
    pub sharp_high: f64,
    pub blurry_high: f64,
    pub diff_low: f64,
    pub diff_high: f64,
}

/// High-band energy of a scene before and after σ=2 gaussian blur, and
/// the band energies of their spectrum difference.
pub fn blur_band_energies(scene_seed: u64, side: usize) -> BlurBands {
    use deeprft::data::{blur, gen_scene, make_kernel, KernelKind};
    use deeprft::metrics::{image_spectrum, radial_band_energy, spectrum_diff};
    let sharp = gen_scene(scene_seed, side, side).unwrap();
    let k = make_kernel(KernelKind::Gaussian { sigma: 2.0 }).unwrap();
    let blurry = blur(&sharp, &k, 0.0, 0).unwrap();
    let s = radial_band_energy(&image_spectrum(&sharp).unwrap(), &BLUR_BANDS).unwrap();
    let b = radial_band_energy(&image_spectrum(&blurry).unwrap(), &BLUR_BANDS).unwrap();
    let d = radial_band_energy(&spectrum_diff(&sharp, &blurry).unwrap(), &BLUR_BANDS).unwrap();
    BlurBands {
        sharp_high: s[1],
        blurry_high: b[1],
        diff_low: d[0],
        diff_high: d[1],
    }
}

// --- determinism and persistence ----------------------------------------------

pub fn tiny_run(steps: usize) -> deeprft::io::RunConfig {
    use deeprft::data::{DataSpec, TrainConfig};
    deeprft::io::RunConfig {
        network: NetworkConfig {
            levels: 2,
            blocks_per_stage: 1,
            base_channels: 4,
            seed: 3,
            ..NetworkConfig::deeprft()
        },
        train: TrainConfig {
            patch: 32,
            batch: 2,
            steps,
            lr_max: 1e-3,
            lr_min: 1e-5,
            seed: 4,
            ..TrainConfig::default()
        },
        data: DataSpec {
            count: 3,
            height: 64,
            width: 64,
            seed: 5,
            ..DataSpec::default()
        },
        ..Default::default()
    }
}

/// Trains `cfg` from scratch, stopping early after `stop` steps if given.
pub fn run_to(cfg: &deeprft::io::RunConfig, stop: Option<usize>) -> deeprft::data::TrainState {
    use deeprft::data::TrainState;
    let pairs = cfg.data.pairs().unwrap();
    let mut state = TrainState::new(Model::build(cfg.network.clone()).unwrap());
    // the learning-rate schedule is the full run's even when stopping early
    let stop = stop.unwrap_or(cfg.train.steps);
    while state.step < stop {
        deeprft::data::train::train_step(&mut state, &pairs, &cfg.train).unwrap();
    }
    state
}

#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    pub runs_identical: bool,
    pub save_load_identical: bool,
    pub resume_identical: bool,
}

pub fn persistence_report(dir: &std::path::Path) -> Persistence {
    use deeprft::data::train;
    use deeprft::io::Checkpoint;
    let cfg = tiny_run(6);
    let a = Checkpoint::from_state(&cfg, &run_to(&cfg, None)).encode();
    let b = Checkpoint::from_state(&cfg, &run_to(&cfg, None)).encode();

    let path = dir.join("run.drfk");
    Checkpoint::decode(&a).unwrap().save(&path).unwrap();
    let on_disk = std::fs::read(&path).unwrap();
    let reloaded = Checkpoint::load(&path).unwrap().encode();

    // stop at step 3, persist, reload, finish
    let half = dir.join("half.drfk");
    Checkpoint::from_state(&cfg, &run_to(&cfg, Some(3))).save(&half).unwrap();
    let mut state = Checkpoint::load(&half).unwrap().into_state().unwrap();
    let pairs = cfg.data.pairs().unwrap();
    train(&mut state, &pairs, &cfg.train, |_, _| Ok(())).unwrap();
    let resumed = Checkpoint::from_state(&cfg, &state).encode();

    Persistence {
        runs_identical: a == b,
        save_load_identical: on_disk == a && reloaded == a,
        resume_identical: resumed == a,
    }
}
