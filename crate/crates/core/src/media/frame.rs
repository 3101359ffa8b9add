use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Gray,
    Rgb,
}

impl ColorMode {
    pub fn channels(self) -> usize {
        match self {
            ColorMode::Gray => 1,
            ColorMode::Rgb => 3,
        }
    }
}

/// A decoded frame, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    mode: ColorMode,
    data: Vec<u8>,
}

impl Frame {
    pub fn new(width: u32, height: u32, mode: ColorMode, data: Vec<u8>) -> Self {
        assert_eq!(
            data.len(),
            width as usize * height as usize * mode.channels(),
            "pixel buffer does not match {width}x{height} {mode:?}"
        );
        Frame {
            width,
            height,
            mode,
            data,
        }
    }

    pub fn gray(width: u32, height: u32, data: Vec<u8>) -> Self {
        Frame::new(width, height, ColorMode::Gray, data)
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Frame::gray(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn mode(&self) -> ColorMode {
        self.mode
    }

    pub fn channels(&self) -> usize {
        self.mode.channels()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn len_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn get(&self, x: u32, y: u32, c: usize) -> u8 {
        self.data[(y as usize * self.width as usize + x as usize) * self.channels() + c]
    }

    /// Rec.601 luma, one byte per pixel.
    pub fn luma(&self) -> Vec<u8> {
        match self.mode {
            ColorMode::Gray => self.data.clone(),
            ColorMode::Rgb => self
                .data
                .chunks_exact(3)
                .map(|p| {
                    let y = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
                    ((y + 500) / 1000) as u8
                })
                .collect(),
        }
    }

    /// Bilinear sample of channel `c` with edge clamping.
    pub fn sample(&self, x: f64, y: f64, c: usize) -> f32 {
        let w = self.width as i64;
        let h = self.height as i64;
        let xf = x.clamp(0.0, (w - 1) as f64);
        let yf = y.clamp(0.0, (h - 1) as f64);
        let x0 = xf.floor() as i64;
        let y0 = yf.floor() as i64;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = (xf - x0 as f64) as f32;
        let fy = (yf - y0 as f64) as f32;
        let ch = self.channels();
        let at = |xx: i64, yy: i64| self.data[(yy as usize * w as usize + xx as usize) * ch + c] as f32;
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear luma sample; for colour frames the Rec.601 mix of the channel samples.
    pub fn sample_luma(&self, x: f64, y: f64) -> f32 {
        match self.mode {
            ColorMode::Gray => self.sample(x, y, 0),
            ColorMode::Rgb => 0.299 * self.sample(x, y, 0) + 0.587 * self.sample(x, y, 1) + 0.114 * self.sample(x, y, 2),
        }
    }

    pub fn from_image(img: image::DynamicImage, mode: ColorMode) -> Self {
        match mode {
            ColorMode::Gray => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                Frame::new(w, h, mode, g.into_raw())
            }
            ColorMode::Rgb => {
                let c = img.to_rgb8();
                let (w, h) = c.dimensions();
                Frame::new(w, h, mode, c.into_raw())
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let color = match self.mode {
            ColorMode::Gray => image::ExtendedColorType::L8,
            ColorMode::Rgb => image::ExtendedColorType::Rgb8,
        };
        image::save_buffer(path, &self.data, self.width, self.height, color).map_err(|e| {
            Error::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            }
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        use image::ImageEncoder;
        let color = match self.mode {
            ColorMode::Gray => image::ExtendedColorType::L8,
            ColorMode::Rgb => image::ExtendedColorType::Rgb8,
        };
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&self.data, self.width, self.height, color)
            .map_err(|e| Error::Serde(e.to_string()))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rec601_luma() {
        let f = Frame::new(2, 1, ColorMode::Rgb, vec![255, 0, 0, 10, 200, 30]);
        // 0.299*255 = 76.2; 0.299*10 + 0.587*200 + 0.114*30 = 123.8
        assert_eq!(f.luma(), vec![76, 124]);
    }

    #[test]
    fn bilinear_midpoint() {
        let f = Frame::gray(2, 2, vec![0, 100, 100, 200]);
        assert!((f.sample(0.5, 0.5, 0) - 100.0).abs() < 1e-4);
        assert_eq!(f.sample(-3.0, 0.0, 0), 0.0);
    }
}
