//! Binary PGM (P5) and PPM (P6) codecs, 8-bit only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Interleaved RGB, `3 * width * height` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!(
            "not a {} file (bad magic)",
            String::from_utf8_lossy(magic)
        ));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and `#` comments may separate header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("expected a number in header at byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("header number at byte {start}: {e}"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("missing whitespace after header".into()),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format!("zero image dimension {width}x{height}"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval} (only 8-bit samples)"));
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_start: pos,
    })
}

fn read_raster(bytes: &[u8], h: &Header, channels: usize) -> Result<Vec<u8>, String> {
    let n = h.width * h.height * channels;
    let raster = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| format!("truncated raster: expected {n} bytes"))?;
    if h.maxval == 255 {
        return Ok(raster.to_vec());
    }
    raster
        .iter()
        .map(|&v| {
            if v as usize > h.maxval {
                Err(format!("sample {v} exceeds maxval {}", h.maxval))
            } else {
                Ok(((v as usize * 255 + h.maxval / 2) / h.maxval) as u8)
            }
        })
        .collect()
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let h = parse_header(bytes, b"P5")?;
    Ok(GrayImage {
        width: h.width,
        height: h.height,
        pixels: read_raster(bytes, &h, 1)?,
    })
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, String> {
    let h = parse_header(bytes, b"P6")?;
    Ok(RgbImage {
        width: h.width,
        height: h.height,
        pixels: read_raster(bytes, &h, 3)?,
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    decode_pgm(&read_file(path)?).map_err(|r| Error::format(path, r))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    decode_ppm(&read_file(path)?).map_err(|r| Error::format(path, r))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(img))
}

pub fn write_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    write_atomic(path.as_ref(), &encode_ppm(img))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl RgbImage {
    /// `[H, W, 3]` tensor with values in [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&v| f64::from(v) / 255.0).collect();
        Tensor::from_vec(&[self.height, self.width, 3], data).expect("raster size matches dims")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (height, width, c) = t.hwc()?;
        if c != 3 {
            return Err(Error::Shape(format!("RGB image needs 3 channels, got {c}")));
        }
        Ok(Self {
            width,
            height,
            pixels: t.data().iter().map(|&v| to_u8(v)).collect(),
        })
    }
}

impl GrayImage {
    /// `[H, W]` tensor of `value / 255`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&v| f64::from(v) / 255.0).collect();
        Tensor::from_vec(&[self.height, self.width], data).expect("raster size matches dims")
    }

    /// `[H, W]` binary mask: 1 where the pixel is at least `threshold`.
    pub fn to_mask(&self, threshold: u8) -> Tensor {
        let data = self
            .pixels
            .iter()
            .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
            .collect();
        Tensor::from_vec(&[self.height, self.width], data).expect("raster size matches dims")
    }

    /// Quantises `[H, W]` (or `[H, W, 1]`) values in [0, 1] as `round(255 v)`.
    pub fn from_unit_tensor(t: &Tensor) -> Result<Self> {
        let (height, width) = match *t.shape() {
            [h, w] | [h, w, 1] => (h, w),
            _ => {
                return Err(Error::Shape(format!(
                    "gray image needs [H, W] or [H, W, 1], got {:?}",
                    t.shape()
                )))
            }
        };
        Ok(Self {
            width,
            height,
            pixels: t.data().iter().map(|&v| to_u8(v)).collect(),
        })
    }
}
