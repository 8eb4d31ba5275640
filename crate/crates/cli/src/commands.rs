use std::fmt;
use std::path::{Path, PathBuf};

use deeprft::data::tiling::tiled_inference_with;
use deeprft::data::train::train_step;
use deeprft::data::{StepLog, TrainState};
use deeprft::io::{read_ppm, write_atomic, write_ppm, write_spectrum, Checkpoint, RunConfig};
use deeprft::metrics::{self, flops_count, image_spectrum, radial_band_energy, spectrum_diff, SpectrumMap};
use deeprft::network::{layers, Model, NetworkConfig};
use deeprft::{Error, Tensor};
use sha2::{Digest, Sha256};

use crate::pairs;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Diverged { .. } | Error::NonFinite(_)) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Sizes rayon's global pool from `DRFK_THREADS`; `1` gives fully
/// sequential (deterministic) execution.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DRFK_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("DRFK_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

/// Short stable id of a network configuration for CSV rows.
fn config_hash(cfg: &NetworkConfig) -> String {
    Sha256::digest(cfg.to_ini().as_bytes())[..6]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn gen_data(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let n = pairs::write_pairs(out, &cfg.data)?;
    eprintln!("wrote {n} pairs to {}", out.display());
    Ok(())
}

fn snapshot_path(out: &Path, step: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("ckpt");
    out.with_file_name(format!("{stem}.step{step}.drfk"))
}

fn write_loss_csv(path: &Path, logs: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    w.write_record(["step", "lr", "loss", "msc", "msed", "msfr"]).map_err(io)?;
    for l in logs {
        w.write_record([
            l.step.to_string(),
            l.lr.to_string(),
            l.loss.to_string(),
            l.msc.to_string(),
            l.msed.to_string(),
            l.msfr.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn train(config: &Path, out: &Path, resume: Option<&Path>, log: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let pairs: Vec<_> = match &cfg.data_dir {
        Some(dir) => pairs::load_pairs(dir)?.into_iter().map(|(_, p)| p).collect(),
        None => cfg.data.pairs()?,
    };
    let mut state = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config.network != cfg.network {
                return Err(CliError::Usage(format!(
                    "{}: checkpoint network differs from the [network] section of {}",
                    path.display(),
                    config.display()
                )));
            }
            ck.into_state()?
        }
        None => TrainState::new(Model::build(cfg.network.clone())?),
    };
    let log_path = log
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("loss.csv"));
    let every = (cfg.train.steps / 20).max(1);
    let mut logs = Vec::new();
    let mut failure = None;
    while state.step < cfg.train.steps {
        match train_step(&mut state, &pairs, &cfg.train) {
            Ok(l) => {
                if l.step % every == 0 || l.step + 1 == cfg.train.steps {
                    eprintln!("step {:>6}  lr {:.3e}  loss {:.6}", l.step, l.lr, l.loss);
                }
                logs.push(l);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && state.step < cfg.train.steps {
            Checkpoint::from_state(&cfg, &state).save(&snapshot_path(out, state.step))?;
        }
    }
    write_loss_csv(&log_path, &logs)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Checkpoint::from_state(&cfg, &state).save(out)?;
    eprintln!("saved {} after {} steps", out.display(), state.step);
    Ok(())
}

fn load_model(ckpt: &Path) -> Result<(Checkpoint, Model)> {
    let ck = Checkpoint::load(ckpt)?;
    let model = ck.model()?;
    Ok((ck, model))
}

fn restore(model: &Model, img: &Tensor, tile: bool, window: usize) -> Result<Tensor> {
    let out = if tile {
        tiled_inference_with(model, img, window)?
    } else {
        match model.forward(img) {
            Ok(mut v) => v.swap_remove(0),
            Err(Error::Shape { detail, .. }) => {
                return Err(CliError::Usage(format!("{detail}; pass --tile to process any size")))
            }
            Err(e) => return Err(e.into()),
        }
    };
    out.ensure_finite("restored image")?;
    Ok(out)
}

pub fn infer(ckpt: &Path, input: &Path, out: &Path, fold: bool, tile: bool) -> Result<()> {
    let (ck, model) = load_model(ckpt)?;
    let model = if fold || ck.config.infer.fold {
        model.fold_for_inference()?
    } else {
        model
    };
    let img = read_ppm(input)?;
    let restored = restore(&model, &img, tile || ck.config.infer.tile, ck.config.infer.window)?;
    write_ppm(out, &restored)?;
    Ok(())
}

pub fn eval(ckpt: &Path, dir: &Path, out: &Path, tile: bool) -> Result<()> {
    let (ck, model) = load_model(ckpt)?;
    let model = if ck.config.infer.fold {
        model.fold_for_inference()?
    } else {
        model
    };
    let tile = tile || ck.config.infer.tile;
    let hash = config_hash(&model.config);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Usage(format!("{}: {e}", out.display()));
    w.write_record(["name", "value", "resolution", "config_hash"]).map_err(io)?;
    let mut sums = [0.0f64; 4];
    let list = pairs::load_pairs(dir)?;
    for (name, p) in &list {
        let s = p.sharp.shape();
        let res = format!("{}x{}", s.h, s.w);
        let restored = restore(&model, &p.blurry, tile, ck.config.infer.window)?;
        let vals = [
            metrics::psnr(&restored, &p.sharp, 1.0)?,
            metrics::ssim(&restored, &p.sharp)?,
            metrics::psnr(&p.blurry, &p.sharp, 1.0)?,
            metrics::ssim(&p.blurry, &p.sharp)?,
        ];
        for (i, (key, v)) in ["psnr", "ssim", "psnr_input", "ssim_input"].iter().zip(vals).enumerate() {
            w.write_record([format!("{name}.{key}"), v.to_string(), res.clone(), hash.clone()])
                .map_err(io)?;
            sums[i] += v;
        }
    }
    for (key, s) in ["psnr", "ssim", "psnr_input", "ssim_input"].iter().zip(sums) {
        let mean = s / list.len() as f64;
        w.write_record([format!("mean.{key}"), mean.to_string(), "mixed".into(), hash.clone()])
            .map_err(io)?;
        eprintln!("mean {key:<10} {mean:.4}");
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(out, &bytes)?;
    Ok(())
}

const BANDS: [(f64, f64); 3] = [(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)];

pub fn analyze(ckpt: &Path, input: &Path, out: &Path, block: Option<&str>, reference: Option<&Path>) -> Result<()> {
    let (_, model) = load_model(ckpt)?;
    let img = read_ppm(input)?;
    ensure_dir(out)?;
    let mut maps: Vec<(String, SpectrumMap)> = vec![("image".into(), image_spectrum(&img)?)];
    if let Some(r) = reference {
        let sharp = read_ppm(r)?;
        maps.push(("reference".into(), image_spectrum(&sharp)?));
        maps.push(("diff".into(), spectrum_diff(&sharp, &img)?));
    }
    let default_block = format!("dec0.{}", model.config.blocks_per_stage - 1);
    let block = block.unwrap_or(&default_block);
    match metrics::feature_spectrum(&model, &img, block) {
        Ok(fm) => maps.extend(fm.into_iter().map(|m| (m.source.to_string(), m))),
        Err(Error::Shape { detail, .. }) => {
            return Err(CliError::Usage(format!("{detail}; feature maps need a size the network accepts")))
        }
        Err(e) => return Err(e.into()),
    }
    let hash = config_hash(&model.config);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Usage(format!("{}: {e}", out.display()));
    w.write_record(["name", "value", "resolution", "config_hash"]).map_err(io)?;
    for (stem, m) in &maps {
        write_spectrum(out, stem, m)?;
        let res = format!("{}x{}", m.h, m.w);
        for ((lo, hi), e) in BANDS.iter().zip(radial_band_energy(m, &BANDS)?) {
            w.write_record([format!("{stem}.band_{lo}_{hi}"), e.to_string(), res.clone(), hash.clone()])
                .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(&out.join("bands.csv"), &bytes)?;
    eprintln!("wrote {} spectrum maps to {}", maps.len(), out.display());
    Ok(())
}

pub fn count(config: Option<&Path>, h: usize, w: usize, per_layer: bool) -> Result<()> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let net = &cfg.network;
    let table = layers(net);
    let params: usize = table.iter().map(|l| l.params()).sum();
    let train: usize = table.iter().map(|l| l.training_params()).sum();
    let report = flops_count(net, h, w);
    if per_layer {
        for e in &report.entries {
            println!("{:<24} {:>14}", e.name, e.macs);
        }
    }
    println!(
        "network   {} levels, {} blocks/stage, {} channels, {}, {}",
        net.levels,
        net.blocks_per_stage,
        net.base_channels,
        net.block_kind.as_str(),
        net.conv_kind.as_str()
    );
    println!("params    {params} ({:.2} M, inference form)", params as f64 / 1e6);
    println!("train     {train} ({:.2} M, with DO-Conv factors)", train as f64 / 1e6);
    println!("macs      {} ({:.2} G at {h}x{w}, {})", report.total_macs, report.giga(), report.convention);
    println!("fft       {:.3} G ops (estimate, not in macs)", report.fft_ops / 1e9);
    Ok(())
}
