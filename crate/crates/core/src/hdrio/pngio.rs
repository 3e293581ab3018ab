//! 8-bit PNG load/save through the `png` crate.

use crate::image::{LdrImage, Plane};
use crate::{Error, Result};

const FORMAT: &str = "png";

/// `round(255 p)` with halves rounded up, `p` clamped to [0, 1].
#[inline]
pub fn map_to_byte(p: f64) -> u8 {
    (255.0 * p.clamp(0.0, 1.0) + 0.5).floor() as u8
}

pub fn decode_png(bytes: &[u8]) -> Result<LdrImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::parse(FORMAT, 0, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::parse(FORMAT, 0, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::parse(FORMAT, 0, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::parse(FORMAT, 0, format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let step = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::parse(FORMAT, 0, format!("unsupported color type {other:?}"))),
    };
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &buf[y * info.line_size..y * info.line_size + w * step];
        for px in row.chunks_exact(step) {
            pixels.push(if step < 3 {
                [px[0]; 3]
            } else {
                [px[0], px[1], px[2]]
            });
        }
    }
    LdrImage::new(w, h, pixels)
}

fn encode(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Encode(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::Encode(e.to_string()))?;
    }
    Ok(out)
}

pub fn encode_png(img: &LdrImage) -> Result<Vec<u8>> {
    let data: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    encode(img.width(), img.height(), png::ColorType::Rgb, &data)
}

pub fn encode_map_png(map: &Plane) -> Result<Vec<u8>> {
    let data: Vec<u8> = map.data().iter().map(|&p| map_to_byte(p)).collect();
    encode(map.width(), map.height(), png::ColorType::Grayscale, &data)
}
