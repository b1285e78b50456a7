use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a binary PGM (expected magic P5)")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("invalid PGM dimensions {width}x{height}")]
    BadDimensions { width: usize, height: usize },
    #[error("unsupported PGM maxval {0} (only 8-bit images are accepted)")]
    UnsupportedMaxval(u32),
    #[error("truncated PGM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count does not match dimensions");
        GrayImage { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64, PgmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::BadHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::BadHeader(format!("{what} out of range")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    if width == 0 || height == 0 {
        return Err(PgmError::BadDimensions { width, height });
    }
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::UnsupportedMaxval(maxval.min(u32::MAX as u64) as u32));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        Some(_) => return Err(PgmError::BadHeader("no whitespace after maxval".into())),
        None => {
            return Err(PgmError::Truncated {
                expected: width * height,
                found: 0,
            })
        }
    }
    let expected = width
        .checked_mul(height)
        .ok_or(PgmError::BadDimensions { width, height })?;
    let payload = &bytes[h.pos..];
    if payload.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let mut pixels = payload[..expected].to_vec();
    if maxval < 255 {
        for p in &mut pixels {
            *p = ((*p as u32).min(maxval as u32) * 255 / maxval as u32) as u8;
        }
    }
    Ok(GrayImage { width, height, pixels })
}

pub fn load_pgm(path: &Path) -> Result<GrayImage, PgmError> {
    let bytes = std::fs::read(path).map_err(|e| PgmError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_pgm(&bytes)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> std::io::Result<()> {
    std::fs::write(path, encode_pgm(image))
}
