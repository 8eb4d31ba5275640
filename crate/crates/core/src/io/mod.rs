//! Files: run configuration, checkpoints, images.

pub mod checkpoint;
pub mod config;
pub mod image;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use checkpoint::Checkpoint;
pub use config::{InferConfig, RunConfig};
pub use image::{read_ppm, write_ppm, write_spectrum};

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
