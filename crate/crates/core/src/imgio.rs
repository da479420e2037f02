//! Raster carrier, color conversion and binary PPM/PGM I/O.
//!
//! Only maxval-255 binary netpbm files are supported: `P6` for color frames
//! and `P5` for masks, ternary images and ground truth. Files written here
//! always use the canonical header `P? W H\n255\n` (one header field per
//! token, single newline separators), so a load/save cycle of any file
//! produced by this module is byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb8,
    YCbCr8,
    Gray8,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb8 | ColorSpace::YCbCr8 => 3,
            ColorSpace::Gray8 => 1,
        }
    }
}

/// Three 8-bit channel values; their meaning depends on the carrier's space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ColorTriple(pub [u8; 3]);

impl ColorTriple {
    pub const fn new(c0: u8, c1: u8, c2: u8) -> Self {
        ColorTriple([c0, c1, c2])
    }
}

/// Row-major, channel-interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    space: ColorSpace,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, space: ColorSpace, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "raster must be non-empty, got {width}x{height}"
            )));
        }
        let expected = width * height * space.channels();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "raster {width}x{height} {space:?} needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            space,
            data,
        })
    }

    /// A raster with every sample set to `value`.
    pub fn filled(width: usize, height: usize, space: ColorSpace, value: u8) -> Result<Self> {
        Raster::new(
            width,
            height,
            space,
            vec![value; width * height * space.channels()],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Color triple at `(x, y)`. Gray rasters replicate the sample.
    #[inline]
    pub fn triple(&self, x: usize, y: usize) -> ColorTriple {
        self.triple_at(y * self.width + x)
    }

    #[inline]
    pub fn triple_at(&self, idx: usize) -> ColorTriple {
        match self.space {
            ColorSpace::Gray8 => {
                let v = self.data[idx];
                ColorTriple([v, v, v])
            }
            _ => {
                let o = idx * 3;
                ColorTriple([self.data[o], self.data[o + 1], self.data[o + 2]])
            }
        }
    }

    pub fn set_triple(&mut self, x: usize, y: usize, c: ColorTriple) {
        let idx = y * self.width + x;
        match self.space {
            ColorSpace::Gray8 => self.data[idx] = c.0[0],
            _ => self.data[idx * 3..idx * 3 + 3].copy_from_slice(&c.0),
        }
    }

    /// Sample of a single-channel raster.
    #[inline]
    pub fn gray(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Converts an RGB raster to full-range YCbCr.
    pub fn to_ycbcr(&self) -> Result<Raster> {
        if self.space != ColorSpace::Rgb8 {
            return Err(Error::Format(format!(
                "expected an RGB raster, got {:?}",
                self.space
            )));
        }
        let mut out = vec![0u8; self.data.len()];
        let row = self.width * 3;
        out.par_chunks_mut(row)
            .zip(self.data.par_chunks(row))
            .for_each(|(dst, src)| {
                for (d, s) in dst.chunks_exact_mut(3).zip(src.chunks_exact(3)) {
                    let c = rgb_to_ycbcr(ColorTriple([s[0], s[1], s[2]]));
                    d.copy_from_slice(&c.0);
                }
            });
        Raster::new(self.width, self.height, ColorSpace::YCbCr8, out)
    }
}

#[inline]
fn round_clamp(v: f64) -> u8 {
    // the cast truncates, which is floor once clamped to be non-negative
    (v + 0.5).clamp(0.0, 255.0) as u8
}

/// Full-range BT.601 RGB to YCbCr, rounded half-up and clamped.
#[inline]
pub fn rgb_to_ycbcr(p: ColorTriple) -> ColorTriple {
    let [r, g, b] = p.0;
    let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    ColorTriple([round_clamp(y), round_clamp(cb), round_clamp(cr)])
}

/// In-phase chrominance of YIQ.
#[inline]
pub fn rgb_to_i_channel(p: ColorTriple) -> f64 {
    let [r, g, b] = p.0;
    0.595716 * f64::from(r) - 0.274453 * f64::from(g) - 0.321263 * f64::from(b)
}

/// Largest attainable |I| over 8-bit RGB.
pub const I_CHANNEL_MAX: f64 = 0.595716 * 255.0;
/// Smallest attainable I over 8-bit RGB.
pub const I_CHANNEL_MIN: f64 = -(0.274453 + 0.321263) * 255.0;

/// Maps an I value from its attainable range onto a byte.
#[inline]
pub fn quantize_i_channel(i: f64) -> u8 {
    round_clamp((i - I_CHANNEL_MIN) / (I_CHANNEL_MAX - I_CHANNEL_MIN) * 255.0)
}

/// Per-pixel boolean layer. Exported as PGM 0/255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn to_raster(&self) -> Raster {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        Raster::new(self.width, self.height, ColorSpace::Gray8, data)
            .expect("mask dimensions are valid")
    }

    /// Reads a 0/255 PGM mask; any non-zero sample counts as set.
    pub fn from_raster(r: &Raster) -> Result<Self> {
        if r.space() != ColorSpace::Gray8 {
            return Err(Error::Format("mask must be a gray raster".into()));
        }
        Mask::from_bits(
            r.width(),
            r.height(),
            r.data().iter().map(|&v| v != 0).collect(),
        )
    }
}

fn parse_header(bytes: &[u8]) -> Result<(String, usize, usize, usize, usize)> {
    let mut pos = 0;
    let mut fields: Vec<String> = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates maxval from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing separator after maxval".into()));
    }
    pos += 1;
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad {what} '{s}'")))
    };
    let w = num(&fields[1], "width")?;
    let h = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    Ok((fields[0].clone(), w, h, maxval, pos))
}

/// Decodes a binary PPM (`P6`) or PGM (`P5`) byte stream.
pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    let (magic, w, h, maxval, offset) = parse_header(bytes)?;
    let space = match magic.as_str() {
        "P6" => ColorSpace::Rgb8,
        "P5" => ColorSpace::Gray8,
        other => return Err(Error::Format(format!("unsupported magic '{other}'"))),
    };
    if maxval != 255 {
        return Err(Error::Format(format!("maxval {maxval} unsupported")));
    }
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(space.channels()))
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let body = &bytes[offset..];
    if body.len() < need {
        return Err(Error::Format(format!(
            "truncated raster: need {need} bytes, have {}",
            body.len()
        )));
    }
    Raster::new(w, h, space, body[..need].to_vec())
}

/// Encodes an RGB raster as `P6` or a gray raster as `P5`.
pub fn encode_pnm(r: &Raster) -> Result<Vec<u8>> {
    let magic = match r.space() {
        ColorSpace::Rgb8 => "P6",
        ColorSpace::Gray8 => "P5",
        ColorSpace::YCbCr8 => {
            return Err(Error::Format("YCbCr rasters are not written to disk".into()))
        }
    };
    let mut out = Vec::with_capacity(r.data().len() + 32);
    write!(out, "{magic}\n{} {}\n255\n", r.width(), r.height()).expect("vec write");
    out.extend_from_slice(r.data());
    Ok(out)
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_pnm(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(r)?).map_err(|e| Error::io(path, e))
}
