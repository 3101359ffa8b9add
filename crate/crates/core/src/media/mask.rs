use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Per-pixel set membership for one frame.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = BinaryMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    /// Membership test for signed coordinates; outside the frame is unset.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height && self.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = self.index(x, y);
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Linear indices of set pixels, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn subtract(&mut self, other: &BinaryMask) {
        assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !b;
        }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    /// Writes a 1-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc.write_header().map_err(|e| encode_err(path, e))?;
        let stride = (self.width as usize).div_ceil(8);
        let mut packed = vec![0u8; stride * self.height as usize];
        for y in 0..self.height as usize {
            for x in 0..self.width as usize {
                if self.bits[y * self.width as usize + x] {
                    packed[y * stride + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer.write_image_data(&packed).map_err(|e| encode_err(path, e))?;
        writer.finish().map_err(|e| encode_err(path, e))
    }

    pub fn load_png(path: &Path) -> Result<BinaryMask> {
        let img = image::open(path)
            .map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        Ok(BinaryMask::from_bits(w, h, img.into_raw().into_iter().map(|v| v > 0).collect()))
    }
}

fn encode_err(path: &Path, e: png::EncodingError) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Directory of per-frame masks named by frame index.
#[derive(Clone, Debug)]
pub struct MaskStore {
    dir: PathBuf,
}

impl MaskStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(MaskStore { dir })
    }

    pub fn path(&self, frame: usize) -> PathBuf {
        self.dir.join(format!("mask_{frame:06}.png"))
    }

    pub fn write(&self, frame: usize, mask: &BinaryMask) -> Result<()> {
        mask.save_png(&self.path(frame))
    }

    pub fn read(&self, frame: usize) -> Result<Option<BinaryMask>> {
        let p = self.path(frame);
        if !p.exists() {
            return Ok(None);
        }
        BinaryMask::load_png(&p).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mask_store_round_trip(w in 1u32..40, h in 1u32..30, seed in any::<u64>()) {
            let dir = tempfile::tempdir().unwrap();
            let store = MaskStore::open(dir.path()).unwrap();
            let mask = BinaryMask::from_fn(w, h, |x, y| crate::rng::mix(seed ^ (x as u64 * 131 + y as u64)) & 1 == 1);
            store.write(3, &mask).unwrap();
            prop_assert_eq!(store.read(3).unwrap().unwrap(), mask);
        }
    }

    #[test]
    fn missing_mask_is_none() {
        let dir = tempfile::tempdir().unwrap();
        let store = MaskStore::open(dir.path()).unwrap();
        assert!(store.read(1).unwrap().is_none());
    }
}
