//! Readers and writers for the on-disk formats used by the pipeline:
//! Radiance `.hdr` panoramas, binary PPM frames, and the HFV float-video
//! container with its JSON metadata sidecar.
//!
//! Every decoder works on an in-memory byte slice and reports malformed
//! input as [`IoError::Parse`] with the byte offset where decoding stopped.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod hfv;
pub mod ppm;
pub mod radiance;
pub mod rgbe;

pub use hfv::{read_hfv, write_hfv, HfvHeader, RawClip};
pub use ppm::{read_ppm, read_ppm_dir, write_ppm, write_ppm_dir, Rgb8Image};
pub use radiance::{read_radiance, write_radiance};
pub use rgbe::Rgbe;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("invalid radiance: {0}")]
    InvalidRadiance(String),
    #[error("metadata error: {0}")]
    Metadata(String),
    #[error("invalid image: {0}")]
    Image(String),
}

impl IoError {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            offset: offset as u64,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, IoError>;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}
