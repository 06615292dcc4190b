//! Binary PPM (P6) images and PGM (P5) label rasters, maxval 255.

use std::path::Path;

use crate::error::{Error, Result};

/// Largest accepted `width * height`.
pub const MAX_PIXELS: usize = 1 << 28;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// `3 * width * height` bytes.
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width as usize * height as usize {
            return Err(Error::validation(format!(
                "image buffer holds {} bytes, expected {}",
                pixels.len(),
                3 * width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            pixels: rgb.repeat(n),
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Per-pixel category ids; 0 is background, `k >= 1` is palette entry `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u8>,
}

impl LabelRaster {
    pub fn new(width: u32, height: u32, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::validation(format!(
                "label buffer holds {} bytes, expected {}",
                labels.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    /// Every nonzero label must name a palette entry.
    pub fn validate(&self, palette_len: usize) -> Result<()> {
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize > palette_len)
        {
            return Err(Error::validation(format!(
                "label {l} at pixel ({}, {}) exceeds palette size {palette_len}",
                i % self.width as usize,
                i / self.width as usize
            )));
        }
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
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
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
            if self.pos - start > 9 {
                return Err(Error::format(start, format!("{what} has too many digits")));
            }
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        Ok(std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .unwrap())
    }
}

/// Parses a P5/P6 header; returns `(width, height, data_offset)`.
fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(u32, u32, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(
            0,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut c = Cursor { bytes, pos: 2 };
    if c.pos < bytes.len() && !bytes[c.pos].is_ascii_whitespace() && bytes[c.pos] != b'#' {
        return Err(Error::format(c.pos, "expected whitespace after magic"));
    }
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(maxval_at, format!("maxval {maxval} unsupported, expected 255")));
    }
    if width == 0 || height == 0 || width * height > MAX_PIXELS {
        return Err(Error::format(maxval_at, format!("unsupported dimensions {width}x{height}")));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::format(c.pos, "expected single whitespace before pixel data")),
    }
    Ok((width as u32, height as u32, c.pos + 1))
}

fn pixel_data<'a>(bytes: &'a [u8], offset: usize, len: usize) -> Result<&'a [u8]> {
    if bytes.len() - offset < len {
        return Err(Error::format(
            bytes.len(),
            format!("truncated pixel data: {} of {len} bytes", bytes.len() - offset),
        ));
    }
    Ok(&bytes[offset..offset + len])
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let (w, h, off) = parse_header(bytes, b"P6")?;
    let data = pixel_data(bytes, off, 3 * w as usize * h as usize)?;
    Image::new(w, h, data.to_vec())
}

pub fn decode_pgm(bytes: &[u8]) -> Result<LabelRaster> {
    let (w, h, off) = parse_header(bytes, b"P5")?;
    let data = pixel_data(bytes, off, w as usize * h as usize)?;
    LabelRaster::new(w, h, data.to_vec())
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn encode_pgm(raster: &LabelRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend_from_slice(&raster.labels);
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    decode_ppm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_label_raster(path: impl AsRef<Path>) -> Result<LabelRaster> {
    let path = path.as_ref();
    decode_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_label_raster(raster: &LabelRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(raster)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let mut bytes = b"P6 # comment\n2\t1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.get(1, 0), [4, 5, 6]);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(decode_ppm(b"P5\n1 1\n255\n\0").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(decode_ppm(b"P6\n0 1\n255\n").is_err());
        assert!(decode_ppm(b"P6\n1 1\n255").is_err());
        assert!(decode_pgm(b"P5\n-1 1\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n99999999999 1\n255\n\0").is_err());
    }

    #[test]
    fn truncated_data_reports_position() {
        let bytes = b"P5\n4 4\n255\n\x01\x02";
        match decode_pgm(bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn label_validation() {
        let r = LabelRaster::new(2, 1, vec![0, 3]).unwrap();
        assert!(r.validate(3).is_ok());
        assert!(r.validate(2).is_err());
    }

    #[test]
    fn ppm_round_trip_is_bitwise() {
        let pixels: Vec<u8> = (0..3 * 7 * 5).map(|i| (i * 37 % 256) as u8).collect();
        let img = Image::new(7, 5, pixels).unwrap();
        let bytes = encode_ppm(&img);
        assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap()), bytes);
    }
}
