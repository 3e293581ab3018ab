//! Radiance RGBE (.hdr) codec.
//!
//! The decoder accepts flat scanlines and new-style run-length encoded
//! scanlines. The encoder always writes flat scanlines.

use crate::image::HdrImage;
use crate::{Error, Result};

const FORMAT: &str = "rgbe";

/// Decodes one RGBE quadruple using the `(m + 0.5) / 256 * 2^(E - 128)`
/// convention. A zero exponent byte decodes to black.
#[inline]
pub fn decode_pixel(q: [u8; 4]) -> [f64; 3] {
    if q[3] == 0 {
        return [0.0; 3];
    }
    let f = exp2i(q[3] as i32 - 128 - 8);
    [
        (q[0] as f64 + 0.5) * f,
        (q[1] as f64 + 0.5) * f,
        (q[2] as f64 + 0.5) * f,
    ]
}

/// Encodes one linear RGB triple. Channels must be finite and non-negative.
pub fn encode_pixel(rgb: [f64; 3]) -> Result<[u8; 4]> {
    if rgb.iter().any(|c| !c.is_finite()) {
        return Err(Error::Encode(format!("non-finite channel in {rgb:?}")));
    }
    let v = rgb[0].max(rgb[1]).max(rgb[2]);
    if v <= 0.0 {
        return Ok([0, 0, 0, 0]);
    }
    // exponent e with v / 2^e in [0.5, 1)
    let mut e = v.log2().floor() as i32 + 1;
    while v / exp2i(e) >= 1.0 {
        e += 1;
    }
    while v / exp2i(e) < 0.5 {
        e -= 1;
    }
    if e + 128 > 255 {
        return Err(Error::Encode(format!("value {v} exceeds the RGBE range")));
    }
    if e + 128 < 1 {
        // below the smallest exponent: flushes to black
        return Ok([0, 0, 0, 0]);
    }
    let scale = 256.0 / exp2i(e);
    let m = |c: f64| (c.max(0.0) * scale).floor().clamp(0.0, 255.0) as u8;
    Ok([m(rgb[0]), m(rgb[1]), m(rgb[2]), (e + 128) as u8])
}

#[inline]
fn exp2i(e: i32) -> f64 {
    2f64.powi(e)
}

pub fn encode_rgbe(img: &HdrImage) -> Result<Vec<u8>> {
    let header = format!(
        "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {} +X {}\n",
        img.height(),
        img.width()
    );
    let mut out = Vec::with_capacity(header.len() + 4 * img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    for &p in img.pixels() {
        out.extend_from_slice(&encode_pixel(p)?);
    }
    Ok(out)
}

pub fn decode_rgbe(bytes: &[u8]) -> Result<HdrImage> {
    let mut pos = 0usize;
    let first = read_line(bytes, &mut pos)?;
    if !(first.starts_with("#?RADIANCE") || first.starts_with("#?RGBE")) {
        return Err(Error::parse(FORMAT, 0, "missing #?RADIANCE / #?RGBE signature"));
    }
    loop {
        let start = pos;
        let line = read_line(bytes, &mut pos)?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt.trim() != "32-bit_rle_rgbe" {
                return Err(Error::parse(
                    FORMAT,
                    start,
                    format!("unsupported FORMAT '{}'", fmt.trim()),
                ));
            }
        }
    }
    let res_start = pos;
    let res = read_line(bytes, &mut pos)?;
    let (height, width) = parse_resolution(&res)
        .ok_or_else(|| Error::parse(FORMAT, res_start, format!("unsupported resolution line '{res}'")))?;
    if width == 0 || height == 0 {
        return Err(Error::parse(FORMAT, res_start, "zero image dimension"));
    }
    let count = width
        .checked_mul(height)
        .filter(|n| *n <= (1 << 31))
        .ok_or_else(|| Error::parse(FORMAT, res_start, "image dimensions overflow"))?;

    let mut pixels = Vec::with_capacity(count);
    let mut scan = vec![[0u8; 4]; width];
    for _ in 0..height {
        read_scanline(bytes, &mut pos, &mut scan)?;
        pixels.extend(scan.iter().map(|&q| decode_pixel(q)));
    }
    HdrImage::new(width, height, pixels)
}

fn read_line(bytes: &[u8], pos: &mut usize) -> Result<String> {
    let start = *pos;
    let rest = &bytes[start..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(FORMAT, start, "unterminated header line"))?;
    *pos = start + end + 1;
    String::from_utf8(rest[..end].to_vec())
        .map(|s| s.trim_end_matches('\r').to_string())
        .map_err(|_| Error::parse(FORMAT, start, "header line is not valid UTF-8"))
}

fn parse_resolution(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    if it.next()? != "-Y" {
        return None;
    }
    let h = it.next()?.parse().ok()?;
    if it.next()? != "+X" {
        return None;
    }
    let w = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((h, w))
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let start = *pos;
    if bytes.len() - start < n {
        return Err(Error::parse(FORMAT, start, "truncated pixel data"));
    }
    *pos += n;
    Ok(&bytes[start..start + n])
}

fn read_scanline(bytes: &[u8], pos: &mut usize, scan: &mut [[u8; 4]]) -> Result<()> {
    let width = scan.len();
    let rle_capable = (8..0x8000).contains(&width);
    let is_rle = rle_capable
        && bytes.len() - *pos >= 4
        && bytes[*pos] == 2
        && bytes[*pos + 1] == 2
        && bytes[*pos + 2] & 0x80 == 0;
    if !is_rle {
        let raw = take(bytes, pos, 4 * width)?;
        for (dst, src) in scan.iter_mut().zip(raw.chunks_exact(4)) {
            dst.copy_from_slice(src);
        }
        return Ok(());
    }

    let head_at = *pos;
    let head = take(bytes, pos, 4)?;
    let declared = ((head[2] as usize) << 8) | head[3] as usize;
    if declared != width {
        return Err(Error::parse(
            FORMAT,
            head_at,
            format!("RLE scanline width {declared} does not match image width {width}"),
        ));
    }
    for ch in 0..4 {
        let mut x = 0;
        while x < width {
            let at = *pos;
            let code = take(bytes, pos, 1)?[0] as usize;
            if code > 128 {
                let run = code - 128;
                let value = take(bytes, pos, 1)?[0];
                if x + run > width {
                    return Err(Error::parse(FORMAT, at, "corrupt RLE run overflows scanline"));
                }
                for px in &mut scan[x..x + run] {
                    px[ch] = value;
                }
                x += run;
            } else {
                if code == 0 || x + code > width {
                    return Err(Error::parse(FORMAT, at, "corrupt RLE literal run"));
                }
                let lit = take(bytes, pos, code)?;
                for (px, &v) in scan[x..x + code].iter_mut().zip(lit) {
                    px[ch] = v;
                }
                x += code;
            }
        }
    }
    Ok(())
}
