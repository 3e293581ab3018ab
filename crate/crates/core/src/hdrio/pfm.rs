//! Portable float map codec. Rows are stored bottom-to-top; a negative
//! scale marks little-endian data.

use crate::image::Plane;
use crate::{Error, Result};

const FORMAT: &str = "pfm";

#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for `Pf`, 3 for `PF`.
    pub channels: usize,
    /// Row-major, top row first, channels interleaved.
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn from_plane(plane: &Plane) -> Self {
        Self {
            width: plane.width(),
            height: plane.height(),
            channels: 1,
            data: plane.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn into_plane(self) -> Result<Plane> {
        if self.channels != 1 {
            return Err(Error::InvalidInput(format!(
                "expected a single-channel PFM, got {} channels",
                self.channels
            )));
        }
        Plane::new(
            self.width,
            self.height,
            self.data.into_iter().map(f64::from).collect(),
        )
    }
}

pub fn encode_pfm(img: &PfmImage) -> Result<Vec<u8>> {
    let tag = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Encode(format!("PFM supports 1 or 3 channels, got {c}"))),
    };
    let row = img.width * img.channels;
    if img.data.len() != row * img.height || row == 0 {
        return Err(Error::Encode("PFM data length does not match dimensions".into()));
    }
    let header = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + 4 * img.data.len());
    out.extend_from_slice(header.as_bytes());
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut pos = 0;
    let channels = match token(bytes, &mut pos)? {
        (_, "Pf") => 1,
        (_, "PF") => 3,
        (at, t) => return Err(Error::parse(FORMAT, at, format!("bad magic '{t}'"))),
    };
    let width = dim(bytes, &mut pos)?;
    let height = dim(bytes, &mut pos)?;
    let (scale_at, scale) = token(bytes, &mut pos)?;
    let scale: f64 = scale
        .parse()
        .map_err(|_| Error::parse(FORMAT, scale_at, format!("bad scale '{scale}'")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(FORMAT, scale_at, "scale must be finite and nonzero"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let little = scale < 0.0;

    let row = width
        .checked_mul(channels)
        .ok_or_else(|| Error::parse(FORMAT, 0, "dimension overflow"))?;
    let count = row
        .checked_mul(height)
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::parse(FORMAT, 0, "dimension overflow"))?;
    if bytes.len() < pos || bytes.len() - pos < 4 * count {
        return Err(Error::parse(FORMAT, pos.min(bytes.len()), "truncated raster"));
    }
    let raw = &bytes[pos..pos + 4 * count];
    let mut data = vec![0f32; count];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        // stored bottom-to-top
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<(usize, &'a str)> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(FORMAT, start, "unexpected end of header"));
    }
    let s = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::parse(FORMAT, start, "header is not ASCII"))?;
    Ok((start, s))
}

fn dim(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let (at, t) = token(bytes, pos)?;
    match t.parse::<usize>() {
        Ok(v) if v > 0 && v <= 1 << 20 => Ok(v),
        _ => Err(Error::parse(FORMAT, at, format!("bad dimension '{t}'"))),
    }
}
