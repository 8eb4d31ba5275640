//! Browser bindings. Three things to poke at:
//!
//! * [`Scene`]: a procedural image and its blurred copy,
//! * [`Scene::spectra`]: Fourier magnitude maps and radial band energies
//!   of both (blur removes mostly, but not only, high frequencies),
//! * [`model_size`]: parameter and MAC counts for a network configuration.
//!
//! The plain-Rust functions underneath are what the tests exercise; the
//! `#[wasm_bindgen]` layer only converts errors to strings.

use deeprft::blocks::{BlockKind, ConvKind};
use deeprft::data::{blur, gen_scene, make_kernel, KernelKind};
use deeprft::metrics::{flops_count, image_spectrum, radial_band_energy, spectrum_diff, SpectrumMap};
use deeprft::network::{layers, NetworkConfig};
use deeprft::Tensor;
use wasm_bindgen::prelude::*;

pub const BANDS: [(f64, f64); 3] = [(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)];

/// RGBA bytes of a `1×3×H×W` image, ready for `ImageData`.
pub fn to_rgba(img: &Tensor) -> Vec<u8> {
    let s = img.shape();
    let mut out = Vec::with_capacity(4 * s.h * s.w);
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                out.push(deeprft::io::image::quantize(img.at(0, c, y, x) as f64));
            }
            out.push(255);
        }
    }
    out
}

/// Grey RGBA of a spectrum in log1p scale, normalized by `peak` (so maps
/// can share one scale).
pub fn spectrum_rgba(map: &SpectrumMap, peak: f64) -> Vec<u8> {
    map.log1p()
        .iter()
        .flat_map(|&v| {
            let g = if peak > 0.0 { deeprft::io::image::quantize(v / peak) } else { 0 };
            [g, g, g, 255]
        })
        .collect()
}

fn log_peak(maps: &[&SpectrumMap]) -> f64 {
    maps.iter()
        .flat_map(|m| m.log1p())
        .fold(0.0, f64::max)
}

#[wasm_bindgen]
pub struct Scene {
    size: usize,
    sharp: Tensor,
    blurry: Tensor,
    kernel: String,
}

impl Scene {
    pub fn build(seed: u64, size: usize, motion: bool, strength: f64, noise: f64) -> Result<Scene, String> {
        let kind = if motion {
            KernelKind::Motion {
                length: strength,
                angle: (seed % 180) as f64 * std::f64::consts::PI / 180.0,
            }
        } else {
            KernelKind::Gaussian { sigma: strength }
        };
        let kernel = make_kernel(kind).map_err(|e| e.to_string())?;
        let sharp = gen_scene(seed, size, size).map_err(|e| e.to_string())?;
        let blurry = blur(&sharp, &kernel, noise, seed ^ 0x5eed).map_err(|e| e.to_string())?;
        Ok(Scene {
            size,
            sharp,
            blurry,
            kernel: kernel.describe(),
        })
    }

    pub fn sharp(&self) -> &Tensor {
        &self.sharp
    }

    pub fn blurry(&self) -> &Tensor {
        &self.blurry
    }

    pub fn analyze(&self) -> Result<Spectra, String> {
        let e = |e: deeprft::Error| e.to_string();
        let sharp = image_spectrum(&self.sharp).map_err(e)?;
        let blurry = image_spectrum(&self.blurry).map_err(e)?;
        let diff = spectrum_diff(&self.sharp, &self.blurry).map_err(e)?;
        let mut bands = radial_band_energy(&sharp, &BANDS).map_err(e)?;
        bands.extend(radial_band_energy(&blurry, &BANDS).map_err(e)?);
        bands.extend(radial_band_energy(&diff, &BANDS).map_err(e)?);
        Ok(Spectra {
            sharp,
            blurry,
            diff,
            bands,
        })
    }
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u32, motion: bool, strength: f64, noise: f64) -> Result<Scene, String> {
        Scene::build(seed as u64, size as usize, motion, strength, noise)
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> u32 {
        self.size as u32
    }

    #[wasm_bindgen(getter)]
    pub fn kernel(&self) -> String {
        self.kernel.clone()
    }

    pub fn sharp_rgba(&self) -> Vec<u8> {
        to_rgba(&self.sharp)
    }

    pub fn blurry_rgba(&self) -> Vec<u8> {
        to_rgba(&self.blurry)
    }

    /// PSNR of the blurry image against the sharp one.
    pub fn psnr(&self) -> f64 {
        deeprft::metrics::psnr(&self.blurry, &self.sharp, 1.0).unwrap_or(f64::NAN)
    }

    pub fn spectra(&self) -> Result<Spectra, String> {
        self.analyze()
    }
}

#[wasm_bindgen]
pub struct Spectra {
    sharp: SpectrumMap,
    blurry: SpectrumMap,
    diff: SpectrumMap,
    bands: Vec<f64>,
}

#[wasm_bindgen]
impl Spectra {
    /// Sharp and blurry maps share a brightness scale.
    pub fn sharp_rgba(&self) -> Vec<u8> {
        spectrum_rgba(&self.sharp, log_peak(&[&self.sharp, &self.blurry]))
    }

    pub fn blurry_rgba(&self) -> Vec<u8> {
        spectrum_rgba(&self.blurry, log_peak(&[&self.sharp, &self.blurry]))
    }

    pub fn diff_rgba(&self) -> Vec<u8> {
        spectrum_rgba(&self.diff, log_peak(&[&self.diff]))
    }

    /// Band energies `[sharp×3, blurry×3, diff×3]`, bands as in [`BANDS`].
    pub fn bands(&self) -> Vec<f64> {
        self.bands.clone()
    }
}

/// `(inference params, training params, MACs at 256², FFT op estimate)`.
pub fn size_of(cfg: &NetworkConfig) -> Result<(usize, usize, u64, f64), String> {
    cfg.validate().map_err(|e| e.to_string())?;
    let table = layers(cfg);
    let report = flops_count(cfg, 256, 256);
    Ok((
        table.iter().map(|l| l.params()).sum(),
        table.iter().map(|l| l.training_params()).sum(),
        report.total_macs,
        report.fft_ops,
    ))
}

/// `[params, training params, MACs, FFT ops]` at 256×256.
#[wasm_bindgen]
pub fn model_size(levels: u32, blocks: u32, channels: u32, fft_blocks: bool, do_conv: bool) -> Result<Vec<f64>, String> {
    let cfg = NetworkConfig {
        levels: levels as usize,
        blocks_per_stage: blocks as usize,
        base_channels: channels as usize,
        block_kind: if fft_blocks { BlockKind::ResFftConv } else { BlockKind::ResBlock },
        conv_kind: if do_conv { ConvKind::DoConv } else { ConvKind::Plain },
        ..NetworkConfig::deeprft()
    };
    let (p, t, m, f) = size_of(&cfg)?;
    Ok(vec![p as f64, t as f64, m as f64, f])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_buffers_have_rgba_layout() {
        let s = Scene::build(4, 64, false, 2.0, 0.0).unwrap();
        let px = s.sharp_rgba();
        assert_eq!(px.len(), 64 * 64 * 4);
        assert!(px.chunks(4).all(|p| p[3] == 255));
        assert!(s.psnr().is_finite());
        assert!(Scene::build(4, 32, false, 2.0, 0.0).is_err());
    }

    #[test]
    fn blur_moves_energy_out_of_the_high_band() {
        let sp = Scene::build(7, 64, false, 2.0, 0.0).unwrap().analyze().unwrap();
        let b = sp.bands();
        assert!(b[5] < b[2]);
        assert!(b[6] > 0.0 && b[8] > 0.0);
        assert_eq!(sp.diff_rgba().len(), 64 * 64 * 4);
    }

    #[test]
    fn presets_match_the_core_counts() {
        let (p, _, m, _) = size_of(&NetworkConfig::deeprft()).unwrap();
        assert!((p as f64 / 9.6e6 - 1.0).abs() < 0.05);
        assert!((m as f64 / 80.21e9 - 1.0).abs() < 0.10);
        assert!(size_of(&NetworkConfig {
            levels: 0,
            ..NetworkConfig::deeprft()
        })
        .is_err());
    }
}
