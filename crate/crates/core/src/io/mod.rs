//! On-disk formats: binary netpbm images and masks, raw `f32` attribution
//! grids and concise sets. Byte layouts are documented in `docs/FORMATS.md`.

mod pnm;
mod raw;

pub use pnm::{
    decode_pgm, decode_ppm, encode_pgm, encode_ppm, read_pgm, read_ppm, write_pgm, write_ppm,
    GrayImage, RgbImage,
};
pub use raw::{
    decode_attribution, decode_concise_set, encode_attribution, encode_concise_set,
    read_attribution, read_concise_set, write_attribution, write_concise_set,
};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
