//! Binary PGM reading and writing.
//!
//! Accepts `P5` (binary) and `P2` (ASCII) with `#` comments in the header.
//! Samples below 128 become background, the rest foreground. Output is
//! always `P5` with 0/255 samples.

use std::path::Path;

use curvematch_core::BinaryImage;

use crate::error::{self, Error, Result};

/// A decoding failure and the byte offset where it was detected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PgmError {
    pub offset: usize,
    pub message: String,
}

impl PgmError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

pub const THRESHOLD: u16 = 128;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PgmError> {
        self.skip_space();
        let start = self.pos;
        let mut value: u32 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((self.bytes[self.pos] - b'0') as u32))
                .ok_or_else(|| PgmError::new(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(if start >= self.bytes.len() {
                PgmError::new(start, format!("truncated before {what}"))
            } else {
                PgmError::new(start, format!("expected {what}, found byte 0x{:02x}", self.bytes[start]))
            });
        }
        Ok(value)
    }
}

pub fn decode(bytes: &[u8]) -> Result<BinaryImage, PgmError> {
    if bytes.len() < 2 {
        return Err(PgmError::new(0, "truncated magic"));
    }
    let ascii = match &bytes[..2] {
        b"P5" => false,
        b"P2" => true,
        other => {
            return Err(PgmError::new(
                0,
                format!("unsupported magic {:?}", String::from_utf8_lossy(other)),
            ))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    cur.skip_space();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::new(2, format!("empty extent {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::new(maxval_at, format!("unsupported maxval {maxval}")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| PgmError::new(2, "extent overflows"))?;
    let mut pixels = Vec::with_capacity(n);
    if ascii {
        for _ in 0..n {
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(PgmError::new(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push((v as u16 >= THRESHOLD) as u8);
        }
    } else {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            Some(_) => return Err(PgmError::new(cur.pos, "missing whitespace after maxval")),
            None => return Err(PgmError::new(cur.pos, "truncated before raster")),
        }
        let data = &bytes[cur.pos..];
        if data.len() < n {
            return Err(PgmError::new(
                bytes.len(),
                format!("truncated raster: {} of {n} bytes", data.len()),
            ));
        }
        for (i, &b) in data[..n].iter().enumerate() {
            if b as u32 > maxval {
                return Err(PgmError::new(cur.pos + i, format!("sample {b} exceeds maxval {maxval}")));
            }
            pixels.push((b as u16 >= THRESHOLD) as u8);
        }
    }
    BinaryImage::new(width, height, pixels).map_err(|e| PgmError::new(0, e.to_string()))
}

pub fn encode(image: &BinaryImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.pixels().iter().map(|&p| if p == 1 { 255u8 } else { 0 }));
    out
}

pub fn load_pgm(path: &Path) -> Result<BinaryImage> {
    let bytes = error::read(path)?;
    decode(&bytes).map_err(|e| Error::Pgm {
        path: path.to_path_buf(),
        offset: e.offset,
        message: e.message,
    })
}

pub fn save_pgm(image: &BinaryImage, path: &Path) -> Result<()> {
    error::write(path, encode(image))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_threshold() {
        let img = decode(b"P5\n2 2\n255\n\x00\xff\xff\x00").unwrap();
        assert_eq!(img, BinaryImage::from_rows(&["01", "10"]).unwrap());
        assert_eq!(decode(b"P5 2 1 255 \x7f\x80").unwrap().pixels(), &[0, 1]);
    }

    #[test]
    fn ascii_with_comment() {
        let img = decode(b"P2 1 1 255 200").unwrap();
        assert_eq!(img.pixels(), &[1]);
        let img = decode(b"P2\n# made by hand\n2 1\n# max\n255\n0 255\n").unwrap();
        assert_eq!(img.pixels(), &[0, 1]);
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(decode(b"P6 1 1 255 \x00").unwrap_err().offset, 0);
        let e = decode(b"P5 2 2 255 \x00\x00").unwrap_err();
        assert!(e.message.contains("truncated"));
        assert_eq!(e.offset, 13);
        assert_eq!(decode(b"P5 2 x").unwrap_err().offset, 5);
        assert!(decode(b"P2 1 1 100 200").is_err());
    }

    #[test]
    fn encode_payload() {
        let img = BinaryImage::from_rows(&["01"]).unwrap();
        let bytes = encode(&img);
        assert_eq!(&bytes[bytes.len() - 2..], &[0, 255]);
        assert_eq!(decode(&bytes).unwrap(), img);
    }
}
