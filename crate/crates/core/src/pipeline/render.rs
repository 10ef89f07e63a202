//! Heatmap overlays and cluster montages.
//!
//! A map is min-max normalized to `v ∈ [0, 255]`; each pixel is blended
//! towards `(255, 255 − v, 0)` with opacity `0.7 · v / 255`, rounded half
//! up. A zero pixel leaves the image untouched.

use crate::error::{Error, Result};
use crate::evalbench::{normalize_to_uint8, Grid8};
use crate::io::RgbImage;
use crate::Tensor;

pub const MAX_OPACITY: f64 = 0.7;

/// Blends one channel value; exposed for per-pixel checks.
pub fn blend_channel(base: u8, heat: u8, v: u8) -> u8 {
    let alpha = MAX_OPACITY * v as f64 / 255.0;
    let out = (1.0 - alpha) * base as f64 + alpha * heat as f64;
    (out + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn overlay_grid(image: &RgbImage, grid: &Grid8) -> Result<RgbImage> {
    if grid.width != image.width || grid.height != image.height {
        return Err(Error::Shape {
            expected: vec![image.height, image.width],
            actual: vec![grid.height, grid.width],
        });
    }
    let mut data = image.data.clone();
    for (p, &v) in grid.data.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let heat = [255, 255 - v, 0];
        for c in 0..3 {
            data[p * 3 + c] = blend_channel(image.data[p * 3 + c], heat[c], v);
        }
    }
    Ok(RgbImage {
        width: image.width,
        height: image.height,
        data,
    })
}

pub fn overlay(image: &RgbImage, map: &Tensor) -> Result<RgbImage> {
    if map.rank() != 2 {
        return Err(Error::Shape {
            expected: vec![image.height, image.width],
            actual: map.shape().to_vec(),
        });
    }
    overlay_grid(image, &normalize_to_uint8(map))
}

/// Tiles images left to right with a one-pixel white gutter. All tiles
/// must share a height.
pub fn strip(tiles: &[RgbImage]) -> Result<RgbImage> {
    let first = tiles.first().ok_or(Error::Empty("montage needs at least one tile"))?;
    let height = first.height;
    if tiles.iter().any(|t| t.height != height) {
        return Err(Error::Config("montage tiles differ in height".into()));
    }
    let width = tiles.iter().map(|t| t.width).sum::<usize>() + tiles.len() - 1;
    let mut data = vec![255u8; width * height * 3];
    let mut x0 = 0;
    for tile in tiles {
        for y in 0..height {
            let src = &tile.data[y * tile.width * 3..(y + 1) * tile.width * 3];
            let dst = (y * width + x0) * 3;
            data[dst..dst + src.len()].copy_from_slice(src);
        }
        x0 += tile.width + 1;
    }
    Ok(RgbImage { width, height, data })
}
