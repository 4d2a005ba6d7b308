use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::grid::RgbImage;

/// Image ↔ latent mapping in front of the denoiser.
///
/// `Identity` reorders HWC pixels into CHW without touching values.
/// `SpaceToDepth(f)` folds each f×f patch into channels and maps [0,1] to
/// [-1,1]; it is lossless up to float rounding of the affine step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentCodec {
    Identity,
    SpaceToDepth(usize),
}

impl Default for LatentCodec {
    fn default() -> Self {
        LatentCodec::SpaceToDepth(4)
    }
}

impl LatentCodec {
    fn factor(self) -> usize {
        match self {
            LatentCodec::Identity => 1,
            LatentCodec::SpaceToDepth(f) => f,
        }
    }

    /// (channels, height, width) of the latent for a `size`×`size` image.
    pub fn latent_shape(self, size: usize) -> (usize, usize, usize) {
        let f = self.factor();
        (3 * f * f, size / f, size / f)
    }

    pub fn encode(self, img: &RgbImage) -> Result<Tensor> {
        let f = self.factor();
        if f == 0 || img.width % f != 0 || img.height % f != 0 {
            return Err(Error::Shape(format!("image {}x{} not divisible by {f}", img.width, img.height)));
        }
        let (h, w) = (img.height / f, img.width / f);
        let mut out = Tensor::zeros(3 * f * f, h, w);
        let affine = |v: f64| match self {
            LatentCodec::Identity => v,
            LatentCodec::SpaceToDepth(_) => 2.0 * v - 1.0,
        };
        for y in 0..img.height {
            for x in 0..img.width {
                let px = img.get(x, y);
                for (ch, &v) in px.iter().enumerate() {
                    let c = (ch * f + y % f) * f + x % f;
                    out.data[(c * h + y / f) * w + x / f] = affine(v);
                }
            }
        }
        Ok(out)
    }

    pub fn decode(self, z: &Tensor) -> Result<RgbImage> {
        let f = self.factor();
        if z.c != 3 * f * f {
            return Err(Error::Shape(format!("latent has {} channels, codec expects {}", z.c, 3 * f * f)));
        }
        let (width, height) = (z.w * f, z.h * f);
        let mut img = RgbImage::filled(width, height, [0.0; 3]);
        let inv = |v: f64| match self {
            LatentCodec::Identity => v,
            LatentCodec::SpaceToDepth(_) => (v + 1.0) / 2.0,
        };
        for y in 0..height {
            for x in 0..width {
                let mut px = [0.0; 3];
                for (ch, p) in px.iter_mut().enumerate() {
                    let c = (ch * f + y % f) * f + x % f;
                    *p = inv(z.data[(c * z.h + y / f) * z.w + x / f]);
                }
                img.set(x, y, px);
            }
        }
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_image() -> RgbImage {
        let mut img = RgbImage::filled(8, 8, [0.0; 3]);
        for y in 0..8 {
            for x in 0..8 {
                img.set(x, y, [(x * 31 % 256) as f64 / 255.0, (y * 17 % 256) as f64 / 255.0, ((x + y) * 7) as f64 / 255.0]);
            }
        }
        img
    }

    #[test]
    fn identity_is_exact() {
        let img = sample_image();
        let z = LatentCodec::Identity.encode(&img).unwrap();
        assert_eq!(z.shape(), (3, 8, 8));
        assert_eq!(LatentCodec::Identity.decode(&z).unwrap(), img);
    }

    #[test]
    fn space_to_depth_roundtrip() {
        let img = sample_image();
        let codec = LatentCodec::SpaceToDepth(4);
        let z = codec.encode(&img).unwrap();
        assert_eq!(z.shape(), codec.latent_shape(8));
        assert_eq!(z.shape(), (48, 2, 2));
        let back = codec.decode(&z).unwrap();
        for (a, b) in back.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(back.to_rgb8(), img.to_rgb8());
    }

    #[test]
    fn flip_commutes_with_encoding() {
        let img = sample_image();
        let codec = LatentCodec::SpaceToDepth(1);
        let a = codec.encode(&img.flip_horizontal()).unwrap();
        let b = codec.encode(&img).unwrap().flip_horizontal();
        assert_eq!(a, b);
    }
}
