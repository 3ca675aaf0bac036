//! Dense grayscale frames and their on-disk forms.
//!
//! Intensities are stored as `f32` in `[0, 1]`, row-major. Two file forms are
//! supported: 8-bit grayscale PNG/PGM for viewing and a raw little-endian
//! `f32` dump for metric-grade data.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{GrayImage, ImageReader, Luma};

use crate::checksum::checksum64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl IntensityFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::format(
                "frame",
                format!("{} values for a {width}x{height} frame", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn ensure_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.dims() != (width, height) {
            return Err(Error::Dimensions {
                expected: (width, height),
                actual: self.dims(),
            });
        }
        Ok(())
    }

    /// Reads an 8-bit grayscale image (PNG or PGM) and normalizes it by 1/255.
    /// Color images are converted to luma.
    pub fn read_image(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = ImageReader::open(path)?
            .with_guessed_format()?
            .decode()?
            .into_luma8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
        Self::new(w as usize, h as usize, data)
    }

    /// 8-bit quantized copy, rounding to nearest and clamping to `[0, 255]`.
    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize);
            Luma([quantize_u8(v)])
        })
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Raw little-endian `f32` bytes, row-major, no header.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_f32_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 4 {
            return Err(Error::format(
                "f32 frame",
                format!(
                    "{} bytes, expected {} for {width}x{height}",
                    bytes.len(),
                    width * height * 4
                ),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(width, height, data)
    }

    pub fn write_f32(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(&self.to_f32_bytes())?;
        file.sync_all()?;
        Ok(())
    }

    pub fn read_f32(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_f32_bytes(width, height, &fs::read(path)?)
    }

    pub fn checksum(&self) -> u64 {
        checksum64(&self.to_f32_bytes())
    }
}

pub(crate) fn quantize_u8(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}
