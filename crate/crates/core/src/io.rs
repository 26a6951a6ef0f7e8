//! Image files: 8-bit binary PGM (P5) and the lossless `NGF1` float container.
//!
//! NGF layout (all little-endian):
//!
//! ```text
//! offset 0   "NGF1"
//! offset 4   width  (u32)
//! offset 8   height (u32)
//! offset 12  width * height f64 pixels, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{NaideError, Result};
use crate::image::{GrayImage, ImageKind};

pub const NGF_MAGIC: &[u8; 4] = b"NGF1";
const NGF_HEADER_LEN: usize = 12;

/// Encodes pixels into PGM P5 bytes after clamping to `[0, 1]` and rounding.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(
        image
            .pixels()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(NaideError::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NaideError::parse(start, format!("{what} does not fit in an integer")))
    }
}

/// Decodes PGM P5 bytes (maxval 255) into a clean image.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(NaideError::parse(0, "missing P5 magic"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_whitespace_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(NaideError::parse(
            maxval_at,
            format!("unsupported maxval {maxval} (only 255 is accepted)"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(NaideError::parse(
            2,
            format!("invalid dimensions {width}x{height}"),
        ));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(NaideError::parse(
                cur.pos,
                "expected whitespace after maxval",
            ))
        }
    }
    let expected = width * height;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(NaideError::parse(
            bytes.len(),
            format!(
                "truncated payload: expected {expected} bytes, found {}",
                payload.len()
            ),
        ));
    }
    let pixels = payload[..expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    GrayImage::new(width, height, pixels, ImageKind::Clean)
}

pub fn encode_ngf(image: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(NGF_HEADER_LEN + 8 * image.len());
    out.extend_from_slice(NGF_MAGIC);
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    for v in image.pixels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes NGF bytes into an image labelled noisy.
pub fn decode_ngf(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 4 || &bytes[..4] != NGF_MAGIC {
        return Err(NaideError::parse(0, "missing NGF1 magic"));
    }
    if bytes.len() < NGF_HEADER_LEN {
        return Err(NaideError::parse(
            bytes.len(),
            format!(
                "truncated header: expected {NGF_HEADER_LEN} bytes, found {}",
                bytes.len()
            ),
        ));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(NaideError::parse(
            4,
            format!("invalid dimensions {width}x{height}"),
        ));
    }
    let expected = width * height * 8;
    let payload = &bytes[NGF_HEADER_LEN..];
    if payload.len() != expected {
        return Err(NaideError::parse(
            bytes.len(),
            format!(
                "{} payload: expected {expected} bytes, found {}",
                if payload.len() < expected {
                    "truncated"
                } else {
                    "oversized"
                },
                payload.len()
            ),
        ));
    }
    let pixels: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
        return Err(NaideError::parse(
            NGF_HEADER_LEN + 8 * i,
            "non-finite pixel value",
        ));
    }
    GrayImage::new(width, height, pixels, ImageKind::Noisy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Ngf,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("pgm") => Ok(ImageFormat::Pgm),
            Some("ngf") => Ok(ImageFormat::Ngf),
            _ => Err(NaideError::Config(format!(
                "{}: unknown image extension (expected .pgm or .ngf)",
                path.display()
            ))),
        }
    }
}

/// Loads a PGM or NGF file, detected from its magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NaideError::io(path, e))?;
    let decoded = if bytes.starts_with(NGF_MAGIC) {
        decode_ngf(&bytes)
    } else {
        decode_pgm(&bytes)
    };
    decoded.map_err(|e| match e {
        NaideError::Parse { offset, message } => NaideError::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Saves by extension: `.pgm` (quantized) or `.ngf` (lossless).
pub fn save_image(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Pgm => encode_pgm(image),
        ImageFormat::Ngf => encode_ngf(image),
    };
    fs::write(path, bytes).map_err(|e| NaideError::io(path, e))
}
