//! Binary PPM (P6) and PGM (P5), 8 bits per sample.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::SpectrumMap;
use crate::tensor::{Float, Shape, Tensor};

use super::write_atomic;

/// Clip to `[0, 1]`, scale by 255, round half away from zero.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round() as u8
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated image header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&v: &usize| v > 0)
        .ok_or_else(|| Error::Format(format!("bad {what} `{}` in image header", String::from_utf8_lossy(tok))))
}

/// Parses a P6 or P5 file into `(channels, height, width, samples)`.
pub fn decode_pnm(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos)? {
        b"P6" => 3,
        b"P5" => 1,
        m => {
            return Err(Error::Format(format!(
                "unsupported image magic `{}` (need binary P6 or P5)",
                String::from_utf8_lossy(m)
            )))
        }
    };
    let w = header_number(bytes, &mut pos, "width")?;
    let h = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit images are supported, maxval is {maxval}")));
    }
    // exactly one whitespace byte separates the header from the samples
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated image header".into()));
    }
    pos += 1;
    let need = channels * h * w;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(Error::Format(format!(
            "image body has {} bytes, {w}×{h}×{channels} needs {need}",
            body.len()
        )));
    }
    Ok((channels, h, w, &body[..need]))
}

/// Reads a P6 (or P5, replicated to three channels) file as a `1×3×H×W`
/// tensor in `[0, 1]`.
pub fn read_ppm<T: Float>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (ch, h, w, body) = decode_pnm(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        let c = if ch == 1 { 0 } else { c };
        T::of(body[(y * w + x) * ch + c] as f64 / 255.0)
    }))
}

pub fn encode_ppm<T: Float>(img: &Tensor<T>) -> Result<Vec<u8>> {
    let s = img.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::shape("encode_ppm", format!("expected 1×3×H×W, got {s:?}")));
    }
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    out.reserve(3 * s.h * s.w);
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                out.push(quantize(img.at(0, c, y, x).as_f64()));
            }
        }
    }
    Ok(out)
}

pub fn write_ppm<T: Float>(path: &Path, img: &Tensor<T>) -> Result<()> {
    write_atomic(path, &encode_ppm(img)?)
}

pub fn encode_pgm(h: usize, w: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

/// Writes `stem.pgm` (log1p magnitudes scaled to 0–255 by their maximum)
/// and `stem.f32` (linear magnitudes, little-endian, row-major).
pub fn write_spectrum(dir: &Path, stem: &str, map: &SpectrumMap) -> Result<()> {
    let logs = map.log1p();
    let peak = logs.iter().cloned().fold(0.0, f64::max);
    let px: Vec<u8> = logs
        .iter()
        .map(|&v| if peak > 0.0 { quantize(v / peak) } else { 0 })
        .collect();
    write_atomic(&dir.join(format!("{stem}.pgm")), &encode_pgm(map.h, map.w, &px))?;
    let raw: Vec<u8> = map.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    write_atomic(&dir.join(format!("{stem}.f32")), &raw)
}
