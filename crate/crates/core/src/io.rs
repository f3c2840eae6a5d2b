//! Binary PGM (P5) for intensity images and a raw little-endian float64
//! container for transform-domain arrays.
//!
//! Raw layout: 16-byte header `b"RF64"`, width `u32`, height `u32`,
//! bit depth `u16`, reserved `u16` (zero), then `width * height` `f64`
//! samples in row-major order. All integers little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::image::ImageArray;
use crate::{Error, Result};

const RAW_MAGIC: &[u8; 4] = b"RF64";

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageArray> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &ImageArray) -> Result<()> {
    let bytes = encode_pgm(image)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Parse a P5 PGM. `maxval <= 255` gives 8-bit samples, otherwise 16-bit
/// big-endian. The bit depth is the smallest `l` with `2^l - 1 >= maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<ImageArray> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::format("not a binary PGM (expected P5)"));
    }
    let width = parse_uint(next_token(bytes, &mut pos)?)?;
    let height = parse_uint(next_token(bytes, &mut pos)?)?;
    let maxval = parse_uint(next_token(bytes, &mut pos)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let needed = width * height * sample_bytes;
    let raster = bytes
        .get(pos..pos + needed)
        .ok_or_else(|| Error::format("PGM raster truncated"))?;
    let data: Vec<f64> = if wide {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64).collect()
    };
    if data.iter().any(|&v| v > maxval as f64) {
        return Err(Error::format("PGM sample exceeds maxval"));
    }
    let bit_depth = (usize::BITS - maxval.leading_zeros()) as u8;
    ImageArray::new(width, height, bit_depth, data)
}

/// Serialize an intensity image as P5 with `maxval = 2^l - 1`.
pub fn encode_pgm(image: &ImageArray) -> Result<Vec<u8>> {
    if !image.is_intensity() {
        return Err(Error::invalid(
            "PGM output requires integer samples within the intensity range",
        ));
    }
    let maxval = (1u32 << image.bit_depth()) - 1;
    let mut out = format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).into_bytes();
    if maxval > 255 {
        for &v in image.data() {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    } else {
        out.extend(image.data().iter().map(|&v| v as u8));
    }
    Ok(out)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::format("PGM header truncated")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_uint(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("bad PGM header field"))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<ImageArray> {
    decode_raw(&fs::read(path)?)
}

pub fn write_raw(path: impl AsRef<Path>, arr: &ImageArray) -> Result<()> {
    fs::write(path, encode_raw(arr))?;
    Ok(())
}

pub fn encode_raw(arr: &ImageArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * arr.pixel_count());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(arr.width() as u32).to_le_bytes());
    out.extend_from_slice(&(arr.height() as u32).to_le_bytes());
    out.extend_from_slice(&(arr.bit_depth() as u16).to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    for v in arr.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<ImageArray> {
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::format("missing raw float64 header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let width = u32_at(4);
    let height = u32_at(8);
    let bit_depth = u16::from_le_bytes([bytes[12], bytes[13]]);
    let body = &bytes[16..];
    if body.len() != width * height * 8 {
        return Err(Error::format(format!(
            "raw payload is {} bytes, expected {}",
            body.len(),
            width * height * 8
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let depth = u8::try_from(bit_depth).map_err(|_| Error::format("bit depth out of range"))?;
    ImageArray::new(width, height, depth, data)
}
