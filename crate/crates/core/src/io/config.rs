//! INI run configuration.
//!
//! ```text
//! [network]
//! preset = deeprft          # deeprft | deeprft_small | deeprft_plus | mimo_unet
//! levels = 3                # overrides apply on top of the preset
//! blocks_per_stage = 8
//! base_channels = 32
//! block_kind = res_fft_conv # res_fft_conv | resblock
//! conv_kind = do_conv       # do_conv | plain
//! seed = 0
//! zero_heads = true
//!
//! [train]
//! patch = 256
//! batch = 16
//! steps = 1000
//! lr_max = 0.0002
//! lr_min = 0.000001
//! seed = 0
//! reduction = pixel_mean    # pixel_mean | literal
//! flips = true
//! checkpoint_every = 0      # 0 = only at the end
//!
//! [data]
//! dir =                     # gen-data output; empty = synthesize from the keys below
//! count = 8
//! height = 256
//! width = 256
//! seed = 0
//! kernel = mixed            # motion | gaussian | mixed
//! motion_min = 5
//! motion_max = 15
//! sigma_min = 1
//! sigma_max = 2.5
//! noise = 0.01
//!
//! [infer]
//! window = 256
//! tile = false
//! fold = false
//! ```
//!
//! Unknown sections and keys are errors, with a "did you mean" hint.

use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;

use crate::blocks::{BlockKind, ConvKind};
use crate::data::{DataSpec, KernelFamily, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::Reduction;
use crate::network::NetworkConfig;

const NETWORK_KEYS: &[&str] = &[
    "preset",
    "levels",
    "blocks_per_stage",
    "base_channels",
    "block_kind",
    "conv_kind",
    "seed",
    "zero_heads",
];
const TRAIN_KEYS: &[&str] = &[
    "patch",
    "batch",
    "steps",
    "lr_max",
    "lr_min",
    "seed",
    "reduction",
    "flips",
    "checkpoint_every",
];
const DATA_KEYS: &[&str] = &[
    "dir",
    "count",
    "height",
    "width",
    "seed",
    "kernel",
    "motion_min",
    "motion_max",
    "sigma_min",
    "sigma_max",
    "noise",
];
const INFER_KEYS: &[&str] = &["window", "tile", "fold"];
const SECTIONS: &[(&str, &[&str])] = &[
    ("network", NETWORK_KEYS),
    ("train", TRAIN_KEYS),
    ("data", DATA_KEYS),
    ("infer", INFER_KEYS),
];

#[derive(Clone, Debug, PartialEq)]
pub struct InferConfig {
    pub window: usize,
    pub tile: bool,
    pub fold: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            window: crate::data::tiling::WINDOW,
            tile: false,
            fold: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub checkpoint_every: usize,
    pub data: DataSpec,
    pub data_dir: Option<PathBuf>,
    pub infer: InferConfig,
}

fn closest<'a>(word: &str, options: &[&'a str]) -> Option<&'a str> {
    options
        .iter()
        .map(|o| (strsim::levenshtein(word, o), *o))
        .filter(|&(d, o)| d <= 3.max(o.len() / 3))
        .min()
        .map(|(_, o)| o)
}

fn unknown(what: &str, word: &str, options: &[&str]) -> Error {
    let hint = match closest(word, options) {
        Some(s) => format!("; did you mean `{s}`?"),
        None => format!(" (expected one of: {})", options.join(", ")),
    };
    Error::Config(format!("unknown {what} `{word}`{hint}"))
}

fn value<T: FromStr>(section: &str, key: &str, raw: &str, expected: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("[{section}] {key}: expected {expected}, got `{raw}`")))
}

fn uint(s: &str, k: &str, raw: &str) -> Result<usize> {
    value(s, k, raw, "a non-negative integer")
}

fn real(s: &str, k: &str, raw: &str) -> Result<f64> {
    let v: f64 = value(s, k, raw, "a number")?;
    if !v.is_finite() {
        return Err(Error::Config(format!("[{s}] {k}: must be finite, got `{raw}`")));
    }
    Ok(v)
}

fn flag(s: &str, k: &str, raw: &str) -> Result<bool> {
    value(s, k, raw, "true or false")
}

fn preset(name: &str) -> Result<NetworkConfig> {
    Ok(match name {
        "deeprft" => NetworkConfig::deeprft(),
        "deeprft_small" => NetworkConfig::deeprft_small(),
        "deeprft_plus" => NetworkConfig::deeprft_plus(),
        "mimo_unet" => NetworkConfig::mimo_unet(),
        _ => {
            return Err(unknown(
                "preset",
                name,
                &["deeprft", "deeprft_small", "deeprft_plus", "mimo_unet"],
            ))
        }
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[]).map(|(c, _)| c)
    }

    /// Like [`RunConfig::parse`], but sections named in `extra` are
    /// accepted and returned raw as `(section, key, value)` triples.
    pub fn parse_with(text: &str, extra: &[&str]) -> Result<(Self, Vec<(String, String, String)>)> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut known: Vec<&str> = SECTIONS.iter().map(|s| s.0).collect();
        known.extend_from_slice(extra);
        let mut raw = Vec::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Config(format!("key `{k}` appears before any [section]")));
                }
                continue;
            };
            if !known.contains(&section) {
                return Err(unknown("section", &format!("[{section}]"), &["[network]", "[train]", "[data]", "[infer]"]));
            }
            let keys = SECTIONS.iter().find(|s| s.0 == section).map(|s| s.1);
            let mut seen: Vec<&str> = Vec::new();
            for (k, v) in props.iter() {
                if let Some(keys) = keys {
                    if !keys.contains(&k) {
                        return Err(unknown(&format!("key in [{section}]"), k, keys));
                    }
                }
                if seen.contains(&k) {
                    return Err(Error::Config(format!("[{section}] {k}: given twice")));
                }
                seen.push(k);
                raw.push((section.to_string(), k.to_string(), v.trim().to_string()));
            }
        }

        let mut cfg = RunConfig::default();
        let get = |s: &str, k: &str| {
            raw.iter()
                .find(|(rs, rk, _)| rs == s && rk == k)
                .map(|(_, _, v)| v.as_str())
        };
        if let Some(p) = get("network", "preset") {
            cfg.network = preset(p)?;
        }
        let mut extras = Vec::new();
        for (s, k, v) in &raw {
            let (s, k, v) = (s.as_str(), k.as_str(), v.as_str());
            let n = &mut cfg.network;
            let t = &mut cfg.train;
            let d = &mut cfg.data;
            match (s, k) {
                ("network", "preset") => {}
                ("network", "levels") => n.levels = uint(s, k, v)?,
                ("network", "blocks_per_stage") => n.blocks_per_stage = uint(s, k, v)?,
                ("network", "base_channels") => n.base_channels = uint(s, k, v)?,
                ("network", "block_kind") => n.block_kind = BlockKind::parse(v)?,
                ("network", "conv_kind") => n.conv_kind = ConvKind::parse(v)?,
                ("network", "seed") => n.seed = value(s, k, v, "a 64-bit unsigned integer")?,
                ("network", "zero_heads") => n.zero_heads = flag(s, k, v)?,
                ("train", "patch") => t.patch = uint(s, k, v)?,
                ("train", "batch") => t.batch = uint(s, k, v)?,
                ("train", "steps") => t.steps = uint(s, k, v)?,
                ("train", "lr_max") => t.lr_max = real(s, k, v)?,
                ("train", "lr_min") => t.lr_min = real(s, k, v)?,
                ("train", "seed") => t.seed = value(s, k, v, "a 64-bit unsigned integer")?,
                ("train", "reduction") => t.reduction = Reduction::parse(v)?,
                ("train", "flips") => t.flips = flag(s, k, v)?,
                ("train", "checkpoint_every") => cfg.checkpoint_every = uint(s, k, v)?,
                ("data", "dir") => cfg.data_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
                ("data", "count") => d.count = uint(s, k, v)?,
                ("data", "height") => d.height = uint(s, k, v)?,
                ("data", "width") => d.width = uint(s, k, v)?,
                ("data", "seed") => d.seed = value(s, k, v, "a 64-bit unsigned integer")?,
                ("data", "kernel") => d.kernel = KernelFamily::parse(v)?,
                ("data", "motion_min") => d.motion_length.0 = real(s, k, v)?,
                ("data", "motion_max") => d.motion_length.1 = real(s, k, v)?,
                ("data", "sigma_min") => d.sigma.0 = real(s, k, v)?,
                ("data", "sigma_max") => d.sigma.1 = real(s, k, v)?,
                ("data", "noise") => d.noise = real(s, k, v)?,
                ("infer", "window") => cfg.infer.window = uint(s, k, v)?,
                ("infer", "tile") => cfg.infer.tile = flag(s, k, v)?,
                ("infer", "fold") => cfg.infer.fold = flag(s, k, v)?,
                _ => extras.push((s.to_string(), k.to_string(), v.to_string())),
            }
        }
        cfg.validate()?;
        Ok((cfg, extras))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let t = &self.train;
        if t.batch == 0 || t.patch == 0 {
            return Err(Error::Config("[train] batch and patch must be ≥ 1".into()));
        }
        if t.lr_max < 0.0 || t.lr_min < 0.0 || t.lr_min > t.lr_max {
            return Err(Error::Config(format!(
                "[train] need 0 ≤ lr_min ≤ lr_max, got {} and {}",
                t.lr_min, t.lr_max
            )));
        }
        let d = &self.data;
        if d.motion_length.0 > d.motion_length.1 || d.motion_length.0 < 1.0 {
            return Err(Error::Config("[data] need 1 ≤ motion_min ≤ motion_max".into()));
        }
        if d.sigma.0 > d.sigma.1 || d.sigma.0 <= 0.0 {
            return Err(Error::Config("[data] need 0 < sigma_min ≤ sigma_max".into()));
        }
        if d.noise < 0.0 {
            return Err(Error::Config("[data] noise must be ≥ 0".into()));
        }
        if self.infer.window == 0 {
            return Err(Error::Config("[infer] window must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Canonical text; `parse(to_ini(c)) == c`.
    pub fn to_ini(&self) -> String {
        let t = &self.train;
        let d = &self.data;
        let mut s = self.network.to_ini();
        s += &format!(
            "\n[train]\npatch = {}\nbatch = {}\nsteps = {}\nlr_max = {}\nlr_min = {}\nseed = {}\nreduction = {}\nflips = {}\ncheckpoint_every = {}\n",
            t.patch, t.batch, t.steps, t.lr_max, t.lr_min, t.seed, t.reduction.as_str(), t.flips, self.checkpoint_every
        );
        s += &format!(
            "\n[data]\ndir = {}\ncount = {}\nheight = {}\nwidth = {}\nseed = {}\nkernel = {}\nmotion_min = {}\nmotion_max = {}\nsigma_min = {}\nsigma_max = {}\nnoise = {}\n",
            self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            d.count,
            d.height,
            d.width,
            d.seed,
            d.kernel.as_str(),
            d.motion_length.0,
            d.motion_length.1,
            d.sigma.0,
            d.sigma.1,
            d.noise
        );
        s += &format!(
            "\n[infer]\nwindow = {}\ntile = {}\nfold = {}\n",
            self.infer.window, self.infer.tile, self.infer.fold
        );
        s
    }
}
