//! Small raster containers shared by the scene, probe and eval code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RGB image, row-major HWC, values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        RgbImage { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Pixels outside `mask` set to zero. Mask must match the image size.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        if mask.width != self.width || mask.height != self.height {
            return Err(Error::Shape(format!(
                "mask {}x{} vs image {}x{}",
                mask.width, mask.height, self.width, self.height
            )));
        }
        let mut out = self.clone();
        for (i, &m) in mask.data.iter().enumerate() {
            if m == 0 {
                out.data[i * 3..i * 3 + 3].fill(0.0);
            }
        }
        Ok(out)
    }

    /// Pixels outside `mask` replaced by `fill`.
    pub fn masked_with(&self, mask: &Mask, fill: [f64; 3]) -> Result<Self> {
        let mut out = self.masked(mask)?;
        for (i, &m) in mask.data.iter().enumerate() {
            if m == 0 {
                out.data[i * 3..i * 3 + 3].copy_from_slice(&fill);
            }
        }
        Ok(out)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Self {
        RgbImage { width, height, data: bytes.iter().map(|&b| b as f64 / 255.0).collect() }
    }
}

/// Binary mask, row-major, values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Mask { width, height, data: vec![0; width * height] }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Mask { width, height, data: vec![1; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Mean pixel x-coordinate of the set pixels.
    pub fn centroid_x(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sum += x as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Nearest-neighbour resampling to `width`×`height`.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Self {
        let mut out = Mask::zeros(width, height);
        for y in 0..height {
            let sy = (y * self.height) / height;
            for x in 0..width {
                let sx = (x * self.width) / width;
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }

    /// Box-filter downsampling: a target cell is set when more than half of
    /// its source pixels are set. Requires integer ratios.
    pub fn downsample_majority(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || self.width % width != 0 || self.height % height != 0 {
            return Err(Error::Shape(format!(
                "cannot box-downsample {}x{} to {}x{}",
                self.width, self.height, width, height
            )));
        }
        let (fx, fy) = (self.width / width, self.height / height);
        let mut out = Mask::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let mut n = 0;
                for dy in 0..fy {
                    for dx in 0..fx {
                        n += self.get(x * fx + dx, y * fy + dy) as usize;
                    }
                }
                out.set(x, y, 2 * n > fx * fy);
            }
        }
        Ok(out)
    }

    pub fn to_gray8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| if v != 0 { 255 } else { 0 }).collect()
    }
}

/// Real-valued single-channel map, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Map2 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Map2 {
    pub fn zeros(width: usize, height: usize) -> Self {
        Map2 { width, height, data: vec![0.0; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Map2 { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.data[y * self.width + self.width - 1 - x] = self.get(x, y);
            }
        }
        out
    }

    /// Bilinear resampling with half-pixel centres and edge clamping.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = Map2::zeros(width, height);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - wx) + self.get(x1, y0) * wx;
                let bot = self.get(x0, y1) * (1.0 - wx) + self.get(x1, y1) * wx;
                out.data[y * width + x] = top * (1.0 - wy) + bot * wy;
            }
        }
        out
    }
}
