use std::path::Path;

use crate::error::{CoreError, Result};

/// RGB image with channel values in [0, 1], stored row-major HWC.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl TextureImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(CoreError::Dimension(format!(
                "{width}x{height} RGB image with {} values",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(CoreError::Range(format!("pixel value {} at {i} outside [0, 1]", data[i])));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel-major copy, `3 × H × W`.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; plane * 3];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + p] = px[c];
            }
        }
        out
    }

    /// Sub-image with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if x + width > self.width || y + height > self.height {
            return Err(CoreError::Dimension(format!(
                "crop {width}x{height}+{x}+{y} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for row in y..y + height {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(Self { width, height, data })
    }

    /// Bilinear resize (pixel-center aligned).
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
            let y1 = (y0 + 1).min(self.height - 1);
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
                let x1 = (x0 + 1).min(self.width - 1);
                let (a, b, c, d) = (self.pixel(x0, y0), self.pixel(x1, y0), self.pixel(x0, y1), self.pixel(x1, y1));
                for ch in 0..3 {
                    let top = a[ch] * (1.0 - tx) + b[ch] * tx;
                    let bottom = c[ch] * (1.0 - tx) + d[ch] * tx;
                    data.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
                }
            }
        }
        Self { width, height, data }
    }

    /// Center crop to `size × size`, first scaling the shorter side up to
    /// `size` when the image is too small.
    pub fn center_square(&self, size: usize) -> Self {
        let mut img = self.clone();
        let short = img.width.min(img.height);
        if short < size {
            let scale = size as f32 / short as f32;
            let w = ((img.width as f32 * scale).round() as usize).max(size);
            let h = ((img.height as f32 * scale).round() as usize).max(size);
            img = img.resize(w, h);
        }
        let (x, y) = ((img.width - size) / 2, (img.height - size) / 2);
        img.crop(x, y, size, size).expect("crop fits after scaling")
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self.data.iter().map(|v| (v * 255.0).round() as u8).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    /// Decodes PNG or 8-bit BMP bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes).map_err(|e| CoreError::format("image", e.to_string()))?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::file(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            CoreError::Format { detail, .. } => CoreError::format("image", format!("{}: {detail}", path.display())),
            other => other,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_png()).map_err(|e| CoreError::file(path, e))
    }
}
