use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Linear RGB image with one `f64` triple per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vec3>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Vec3::zeros(); width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Vec3 {
        self.data[y * self.width + x]
    }

    /// Values rounded to 8 bits per channel, as they would be stored.
    pub fn quantized(&self) -> Self {
        Self {
            data: self.data.iter().map(|c| c.map(|v| to_u8(v) as f64 / 255.0)).collect(),
            ..*self
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(self.data.len() * 3);
        for c in &self.data {
            buf.extend([to_u8(c.x), to_u8(c.y), to_u8(c.z)]);
        }
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, buf).expect("buffer size");
        img.save(path).map_err(|e| map_image_error(path, e))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| map_image_error(path, e))?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img
            .pixels()
            .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64) / 255.0)
            .collect();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data,
        })
    }
}

/// Binary foreground mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf).expect("buffer size");
        img.save(path).map_err(|e| map_image_error(path, e))
    }

    /// Any nonzero pixel is foreground.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| map_image_error(path, e))?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data: img.pixels().map(|p| p[0] != 0).collect(),
        })
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn map_image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = ColorImage::new(3, 2);
        img.data[4] = Vec3::new(1.0, 0.5, 0.0);
        img.data[1] = Vec3::new(0.2, 1.7, -0.1);
        let path = dir.path().join("c.png");
        img.save_png(&path).unwrap();
        assert_eq!(ColorImage::load_png(&path).unwrap(), img.quantized());

        let mask = Mask::from_fn(5, 4, |x, y| (x + y) % 3 == 0);
        let path = dir.path().join("m.png");
        mask.save_png(&path).unwrap();
        assert_eq!(Mask::load_png(&path).unwrap(), mask);
        assert!(matches!(Mask::load_png(dir.path().join("missing.png")), Err(Error::Io { .. })));
    }
}
