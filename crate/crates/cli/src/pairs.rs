//! On-disk pair directories: `sharp_<i>.ppm`, `blurry_<i>.ppm` and
//! `manifest.csv`.

use std::path::Path;

use deeprft::data::{make_kernel, DataSpec, KernelKind, ScenePair};
use deeprft::io::{read_ppm, write_atomic, write_ppm};
use deeprft::Error;

use crate::commands::CliError;

pub const MANIFEST: &str = "manifest.csv";
const HEADER: [&str; 8] = ["index", "seed", "kernel", "length", "angle", "sigma", "size", "noise"];

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

pub fn write_pairs(dir: &Path, spec: &DataSpec) -> Result<usize, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).map_err(|e| csv_err(dir, e))?;
    for i in 0..spec.count {
        let p = spec.pair(i)?;
        write_ppm(&dir.join(format!("sharp_{i}.ppm")), &p.sharp)?;
        write_ppm(&dir.join(format!("blurry_{i}.ppm")), &p.blurry)?;
        let (kind, length, angle, sigma) = match p.kernel.kind {
            KernelKind::Motion { length, angle } => ("motion", length.to_string(), angle.to_string(), String::new()),
            KernelKind::Gaussian { sigma } => ("gaussian", String::new(), String::new(), sigma.to_string()),
        };
        w.write_record([
            i.to_string(),
            p.seed.to_string(),
            kind.to_string(),
            length,
            angle,
            sigma,
            p.kernel.size.to_string(),
            p.noise.to_string(),
        ])
        .map_err(|e| csv_err(dir, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST), &bytes)?;
    Ok(spec.count)
}

/// Reads a directory written by [`write_pairs`]. Images are the stored
/// 8-bit values.
pub fn load_pairs(dir: &Path) -> Result<Vec<(String, ScenePair)>, CliError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "{}: no {MANIFEST}; is this a gen-data output directory?",
            dir.display()
        )));
    }
    let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let headers = r.headers().map_err(|e| csv_err(&path, e))?.clone();
    if headers.iter().ne(HEADER) {
        return Err(CliError::Usage(format!("{}: unexpected header {headers:?}", path.display())));
    }
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(&path, e))?;
        let bad = |what: &str| CliError::Usage(format!("{} row {}: bad {what}", path.display(), row + 1));
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        let index: usize = rec[0].parse().map_err(|_| bad("index"))?;
        let kind = match &rec[2] {
            "motion" => KernelKind::Motion {
                length: num(3, "length")?,
                angle: num(4, "angle")?,
            },
            "gaussian" => KernelKind::Gaussian { sigma: num(5, "sigma")? },
            _ => return Err(bad("kernel")),
        };
        let pair = ScenePair {
            sharp: read_ppm(&dir.join(format!("sharp_{index}.ppm")))?,
            blurry: read_ppm(&dir.join(format!("blurry_{index}.ppm")))?,
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            kernel: make_kernel(kind)?,
            noise: num(7, "noise")?,
        };
        if pair.sharp.shape() != pair.blurry.shape() {
            return Err(CliError::Usage(format!("pair {index}: sharp and blurry sizes differ")));
        }
        out.push((format!("pair_{index}"), pair));
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{}: manifest lists no pairs", path.display())));
    }
    Ok(out)
}
