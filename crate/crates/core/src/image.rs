//! 8-bit RGB images and binary PPM (P6, maxval 255) I/O.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Interleaved RGB, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, "image dimensions must be >= 1, got {width}x{height}");
        ensure!(
            data.len() == width * height * 3,
            "{}x{} RGB image needs {} bytes, got {}",
            width,
            height,
            width * height * 3,
            data.len()
        );
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * 3 + c]
    }

    /// `(1, 3, H', W')` in `[0, 1]`, replicate-padded to `H' × W'`.
    pub fn to_tensor_padded<T: Scalar>(&self, padded_w: usize, padded_h: usize) -> Result<Tensor<T>> {
        ensure!(
            padded_w >= self.width && padded_h >= self.height,
            "padding to {padded_w}x{padded_h} would shrink a {}x{} image",
            self.width,
            self.height
        );
        Ok(Tensor::from_fn([1, 3, padded_h, padded_w], |_, c, y, x| {
            let v = self.pixel(x.min(self.width - 1), y.min(self.height - 1), c);
            T::from_f64_round(v as f64 / 255.0)
        }))
    }

    /// `clamp(v, 0, 1)·255`, rounded, cropped to `width × height` from the
    /// top-left of batch item 0.
    pub fn from_tensor_cropped<T: Scalar>(t: &Tensor<T>, width: usize, height: usize) -> Result<Self> {
        ensure!(t.channels() == 3, "image tensor needs 3 channels, got {}", t.channels());
        ensure!(
            t.width() >= width && t.height() >= height,
            "cannot crop {}x{} out of {}x{}",
            width,
            height,
            t.width(),
            t.height()
        );
        Self::from_fn(width, height, |x, y, c| to_u8(t.get(0, c, y, x).to_f64_exact()))
    }

    pub fn read_ppm(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_ppm_bytes(&bytes)
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut p = PpmHeader { buf: bytes, pos: 0 };
        let magic = p.token()?;
        if magic != b"P6" {
            return Err(Error::Malformed {
                what: "PPM",
                reason: "only binary P6 is supported".into(),
            });
        }
        let width = p.number()?;
        let height = p.number()?;
        let maxval = p.number()?;
        if maxval != 255 {
            return Err(Error::Malformed {
                what: "PPM",
                reason: format!("maxval {maxval} unsupported (need 255)"),
            });
        }
        // exactly one whitespace byte separates the header from the raster
        if p.pos >= bytes.len() {
            return Err(Error::Truncated("PPM raster"));
        }
        p.pos += 1;
        if width == 0 || height == 0 {
            return Err(Error::Malformed {
                what: "PPM",
                reason: "zero dimension".into(),
            });
        }
        let need = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::Malformed {
                what: "PPM",
                reason: "dimensions overflow".into(),
            })?;
        let raster = &bytes[p.pos..];
        if raster.len() < need {
            return Err(Error::Truncated("PPM raster"));
        }
        Self::new(width, height, raster[..need].to_vec())
    }

    pub fn write_ppm(&self, mut w: impl Write) -> Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_ppm_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(self.data.len() + 20);
        self.write_ppm(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

pub(crate) fn to_u8(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round() as u8
}

struct PpmHeader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl PpmHeader<'_> {
    fn token(&mut self) -> Result<&[u8]> {
        loop {
            match self.buf.get(self.pos) {
                None => return Err(Error::Truncated("PPM header")),
                Some(b'#') => {
                    while let Some(&b) = self.buf.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
            }
        }
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        Ok(&self.buf[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Malformed {
                what: "PPM",
                reason: format!("bad header number {:?}", String::from_utf8_lossy(t)),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = Image::from_fn(5, 3, |x, y, c| (x * 40 + y * 7 + c) as u8).unwrap();
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        assert_eq!(Image::from_ppm_bytes(&buf).unwrap(), img);
    }

    #[test]
    fn header_comments() {
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = Image::from_ppm_bytes(&bytes).unwrap();
        assert_eq!(img.pixel(1, 0, 2), 6);
    }

    #[test]
    fn truncated_raster() {
        let bytes = b"P6 2 2 255\n\x00\x01".to_vec();
        assert!(matches!(Image::from_ppm_bytes(&bytes), Err(Error::Truncated(_))));
    }

    #[test]
    fn pad_replicates_edges() {
        let img = Image::from_fn(2, 1, |x, _, c| (x * 100 + c) as u8).unwrap();
        let t: Tensor<f32> = img.to_tensor_padded(4, 3).unwrap();
        assert_eq!(t.get(0, 1, 2, 3), (101.0f64 / 255.0) as f32);
        let back = Image::from_tensor_cropped(&t, 2, 1).unwrap();
        assert_eq!(back, img);
    }
}
