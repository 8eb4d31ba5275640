mod common;

use common::*;
use deeprft::data::{blur, gen_scene, make_kernel, sample_patch, tiled_inference, tiled_inference_with, DataSpec, KernelFamily, KernelKind, TileLayout};
use deeprft::data::PatchPlan;
use deeprft::network::{Model, NetworkConfig};
use deeprft::{Shape, Tensor};

#[test]
fn flips_are_fair_coins() {
    let n = 10_000;
    let (mut h, mut v, mut both) = (0, 0, 0);
    let mut x_hist = [0usize; 4];
    for seed in 0..n as u64 {
        let p = PatchPlan::draw(64, 64, 61, seed).unwrap();
        h += p.hflip as usize;
        v += p.vflip as usize;
        both += (p.hflip && p.vflip) as usize;
        x_hist[p.x0] += 1;
    }
    // 4σ of a fair binomial over 1e4 draws is 0.02
    let f = |k: usize| k as f64 / n as f64;
    assert!((f(h) - 0.5).abs() < 0.02, "hflip {}", f(h));
    assert!((f(v) - 0.5).abs() < 0.02, "vflip {}", f(v));
    assert!((f(both) - 0.25).abs() < 0.02, "joint {}", f(both));
    assert!(x_hist.iter().all(|&c| (f(c) - 0.25).abs() < 0.02), "{x_hist:?}");
}

#[test]
fn patch_pairs_share_crop_and_flip() {
    let pair = DataSpec { count: 1, height: 64, width: 80, seed: 2, ..Default::default() }.pair(0).unwrap();
    for seed in 0..20 {
        let (b, s) = sample_patch(&pair, 32, seed).unwrap();
        let plan = PatchPlan::draw(64, 80, 32, seed).unwrap();
        assert_eq!(b, plan.apply(&pair.blurry, 32).unwrap());
        assert_eq!(s, plan.apply(&pair.sharp, 32).unwrap());
        let corner = pair.sharp.at(0, 1, plan.y0, plan.x0);
        let (yy, xx) = (if plan.vflip { 31 } else { 0 }, if plan.hflip { 31 } else { 0 });
        assert_eq!(s.at(0, 1, yy, xx), corner);
    }
    assert!(sample_patch(&pair, 65, 0).is_err());
}

#[test]
fn gaussian_blur_matches_direct_convolution() {
    let sigma = 1.3;
    let sharp = gen_scene(5, 64, 64).unwrap();
    let k = make_kernel(KernelKind::Gaussian { sigma }).unwrap();
    let got = blur(&sharp, &k, 0.0, 0).unwrap();
    let r = (3.0 * sigma).ceil() as isize;
    let g = |d: isize| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
    let norm: f64 = (-r..=r).map(g).sum::<f64>().powi(2);
    for c in 0..3 {
        for &(y, x) in &[(0isize, 0isize), (10, 20), (63, 5), (31, 63), (40, 40)] {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = ((y + dy).clamp(0, 63) as usize, (x + dx).clamp(0, 63) as usize);
                    acc += g(dy) * g(dx) / norm * sharp.at(0, c, yy, xx) as f64;
                }
            }
            let v = got.at(0, c, y as usize, x as usize) as f64;
            assert!((v - acc.clamp(0.0, 1.0)).abs() < 1e-5, "({c},{y},{x}): {v} vs {acc}");
        }
    }
}

#[test]
fn impulse_blur_stamps_the_kernel() {
    let k = make_kernel(KernelKind::Motion { length: 7.0, angle: 0.6 }).unwrap();
    assert!((k.taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut img = Tensor::<f32>::zeros(Shape::new(1, 3, 64, 64));
    for c in 0..3 {
        img.set(0, c, 32, 32, 1.0);
    }
    let out = blur(&img, &k, 0.0, 0).unwrap();
    let r = k.radius() as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            // correlation flips the kernel onto the impulse
            let v = out.at(0, 2, (32 + dy) as usize, (32 + dx) as usize) as f64;
            assert!((v - k.at(-dy, -dx)).abs() < 1e-7);
        }
    }
}

#[test]
fn horizontal_motion_covers_its_length() {
    for len in [3.0, 5.0, 9.0] {
        let k = make_kernel(KernelKind::Motion { length: len, angle: 0.0 }).unwrap();
        let nonzero: Vec<isize> = (-(k.radius() as isize)..=k.radius() as isize).filter(|&dx| k.at(0, dx) > 0.0).collect();
        assert_eq!(nonzero.len(), len as usize);
        assert!((1..=k.radius() as isize).all(|d| k.at(d, 0) == 0.0 || k.at(d, 0) < k.at(0, 0)));
    }
}

#[test]
fn scenes_are_seeded_and_bounded() {
    let a = gen_scene(1, 64, 96).unwrap();
    assert_eq!(a, gen_scene(1, 64, 96).unwrap());
    assert_ne!(a, gen_scene(2, 64, 96).unwrap());
    assert!(a.min_value() >= 0.0 && a.max_value() <= 1.0);
    assert!(a.max_value() - a.min_value() > 0.3, "scene should have contrast");
    assert!(gen_scene(1, 32, 96).is_err());
    let spec = DataSpec { count: 3, height: 64, width: 64, seed: 9, kernel: KernelFamily::Motion, noise: 0.0, ..Default::default() };
    let pairs = spec.pairs().unwrap();
    assert_ne!(pairs[0].sharp, pairs[1].sharp);
    assert_eq!(pairs[2], spec.pair(2).unwrap());
}

#[test]
fn noise_is_seeded() {
    let sharp = gen_scene(3, 64, 64).unwrap();
    let k = make_kernel(KernelKind::Gaussian { sigma: 1.0 }).unwrap();
    let a = blur(&sharp, &k, 0.02, 1).unwrap();
    assert_eq!(a, blur(&sharp, &k, 0.02, 1).unwrap());
    assert_ne!(a, blur(&sharp, &k, 0.02, 2).unwrap());
    assert!(blur(&sharp, &k, -0.1, 1).is_err());
}

#[test]
fn identity_model_tiles_exactly() {
    let model = identity_model(0);
    for (h, w) in random_sizes(4, 33, 150, 7) {
        let x: Tensor<f32> = uniform(Shape::new(1, 3, h, w), 0.0, 1.0, (h * w) as u64);
        assert_eq!(tiled_inference_with(&model, &x, 64).unwrap(), x, "{h}x{w}");
    }
}

#[test]
fn single_window_equals_direct_forward() {
    let model = Model::<f32>::build(NetworkConfig { levels: 3, blocks_per_stage: 1, base_channels: 4, zero_heads: false, ..NetworkConfig::deeprft() }).unwrap();
    let x: Tensor<f32> = uniform(Shape::new(1, 3, 256, 256), 0.0, 1.0, 1);
    assert_eq!(tiled_inference(&model, &x).unwrap(), model.forward(&x).unwrap().swap_remove(0));
}

#[test]
fn tile_owners_partition_the_image() {
    for (h, w) in [(256, 256), (257, 300), (700, 513)] {
        let layout = TileLayout::new(h, w, 256, 256).unwrap();
        let origins = layout.origins();
        for (y, x) in [(0, 0), (h - 1, w - 1), (h / 2, w / 3)] {
            let (oy, ox) = layout.owner(y, x);
            assert!(origins.contains(&(oy, ox)));
            assert!(y >= oy && y < oy + 256 && x >= ox && x < ox + 256);
        }
    }
}
