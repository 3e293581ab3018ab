//! On-disk raster formats: Radiance RGBE for HDR scenes, PFM for exact
//! float maps and 8-bit PNG for display images and map previews.

mod pfm;
mod pngio;
mod rgbe;

use std::path::Path;

pub use pfm::{decode_pfm, encode_pfm, PfmImage};
pub use pngio::{decode_png, encode_png, encode_map_png, map_to_byte};
pub use rgbe::{decode_rgbe, encode_pixel, decode_pixel, encode_rgbe};

use crate::image::{HdrImage, LdrImage, Plane};
use crate::{Error, Result};

pub fn read_hdr(path: impl AsRef<Path>) -> Result<HdrImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rgbe(&bytes)
}

pub fn write_hdr(path: impl AsRef<Path>, img: &HdrImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_rgbe(img)?).map_err(|e| Error::io(path, e))
}

pub fn read_png(path: impl AsRef<Path>) -> Result<LdrImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes)
}

pub fn write_png(path: impl AsRef<Path>, img: &LdrImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_png(img)?).map_err(|e| Error::io(path, e))
}

/// Writes a [0, 1] map as an 8-bit grayscale preview.
pub fn write_map_png(path: impl AsRef<Path>, map: &Plane) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_map_png(map)?).map_err(|e| Error::io(path, e))
}

/// Reads a single-channel PFM into a plane.
pub fn read_pfm_plane(path: impl AsRef<Path>) -> Result<Plane> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)?.into_plane()
}

/// Writes a plane as single-channel PFM. Values are narrowed to `f32`.
pub fn write_pfm_plane(path: impl AsRef<Path>, plane: &Plane) -> Result<()> {
    let path = path.as_ref();
    let img = PfmImage::from_plane(plane);
    std::fs::write(path, encode_pfm(&img)?).map_err(|e| Error::io(path, e))
}
