//! Classic image-level augmentation for real cropped symbols: rotation,
//! rescaling, stroke thickness and pixel dropout, always in that order.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GlyphImage;
use crate::rng::Rng;

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: Copy> Range<T> {
    pub const fn fixed(v: T) -> Self {
        Range { min: v, max: v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Counter-clockwise rotation, degrees.
    pub rotation_deg: Range<f64>,
    pub scale: Range<f64>,
    /// Dilation (positive) or erosion (negative) steps.
    pub thickness_delta: Range<i32>,
    /// Probability that an inked pixel is dropped.
    pub erosion_noise: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            rotation_deg: Range {
                min: -10.0,
                max: 10.0,
            },
            scale: Range { min: 0.9, max: 1.1 },
            thickness_delta: Range { min: -1, max: 1 },
            erosion_noise: 0.02,
        }
    }
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            rotation_deg: Range::fixed(0.0),
            scale: Range::fixed(1.0),
            thickness_delta: Range::fixed(0),
            erosion_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rotation_deg;
        if !(r.min <= r.max) || !r.min.is_finite() || !r.max.is_finite() {
            return Err(Error::config("rotation_deg", "expected finite min <= max"));
        }
        if !(self.scale.min > 0.0 && self.scale.min <= self.scale.max && self.scale.max.is_finite())
        {
            return Err(Error::config("scale", "expected 0 < min <= max"));
        }
        if self.thickness_delta.min > self.thickness_delta.max {
            return Err(Error::config("thickness_delta", "expected min <= max"));
        }
        if !(0.0..1.0).contains(&self.erosion_noise) {
            return Err(Error::config("erosion_noise", "must be in [0, 1)"));
        }
        Ok(())
    }

    /// Draws one concrete transform. Every call consumes the same number of
    /// random values, whatever the ranges.
    pub fn sample(&self, rng: &mut Rng) -> Transform {
        let lerp = |r: Range<f64>, u: f64| r.min + (r.max - r.min) * u;
        let rotation_deg = lerp(self.rotation_deg, rng.random());
        let scale = lerp(self.scale, rng.random());
        let span = (self.thickness_delta.max - self.thickness_delta.min) as u32 + 1;
        let thickness = self.thickness_delta.min + rng.random_range(0..span) as i32;
        Transform {
            rotation_deg,
            scale,
            thickness,
            dropout: self.erosion_noise,
            dropout_seed: rng.random(),
        }
    }
}

/// A fully specified augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub rotation_deg: f64,
    pub scale: f64,
    pub thickness: i32,
    pub dropout: f64,
    pub dropout_seed: u64,
}

impl Transform {
    pub fn apply(&self, img: &GlyphImage) -> Result<GlyphImage> {
        let mut out = rotate(img, self.rotation_deg);
        if self.scale != 1.0 {
            let w = (out.width() as f64 * self.scale).round();
            let h = (out.height() as f64 * self.scale).round();
            if w < 1.0 || h < 1.0 {
                return Err(Error::DegenerateOutput {
                    width: w.max(0.0) as usize,
                    height: h.max(0.0) as usize,
                });
            }
            out = out.resize(w as usize, h as usize);
        }
        out = match self.thickness {
            d if d > 0 => out.dilate(d as usize),
            d if d < 0 => out.erode(d.unsigned_abs() as usize),
            _ => out,
        };
        if self.dropout > 0.0 {
            let mut rng = crate::rng::rng_from_seed(self.dropout_seed);
            out = out.map(|v| {
                if v > 0.0 && rng.random::<f64>() < self.dropout {
                    0.0
                } else {
                    v
                }
            });
        }
        Ok(out)
    }
}

/// Samples a transform from `params` and applies it.
pub fn augment(img: &GlyphImage, params: &AugmentParams, rng: &mut Rng) -> Result<GlyphImage> {
    params.validate()?;
    params.sample(rng).apply(img)
}

/// Counter-clockwise rotation onto a canvas just large enough for the
/// whole input. Multiples of 90° move pixels exactly; other angles sample
/// bilinearly.
pub fn rotate(img: &GlyphImage, degrees: f64) -> GlyphImage {
    let quarter = degrees / 90.0;
    if quarter == quarter.round() {
        return rotate_quarters(img, quarter.rem_euclid(4.0) as u32);
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (s, c) = degrees.to_radians().sin_cos();
    let out_w = (w * c.abs() + h * s.abs()).ceil().max(1.0) as usize;
    let out_h = (w * s.abs() + h * c.abs()).ceil().max(1.0) as usize;
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ox, oy) = ((out_w as f64 - 1.0) / 2.0, (out_h as f64 - 1.0) / 2.0);
    let mut out = GlyphImage::new(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            // inverse map; y points down, so screen-CCW is a clockwise turn
            // in these coordinates
            let (dx, dy) = (x as f64 - ox, y as f64 - oy);
            let sx = cx + c * dx - s * dy;
            let sy = cy + s * dx + c * dy;
            out.set(x, y, img.sample_bilinear(sx, sy));
        }
    }
    out
}

fn rotate_quarters(img: &GlyphImage, turns: u32) -> GlyphImage {
    let (w, h) = (img.width(), img.height());
    match turns {
        0 => img.clone(),
        2 => GlyphImage::from_pixels(w, h, img.pixels().iter().rev().copied().collect()),
        _ => {
            let mut out = GlyphImage::new(h, w);
            for y in 0..w {
                for x in 0..h {
                    let v = if turns == 1 {
                        img.get(w - 1 - y, x)
                    } else {
                        img.get(y, h - 1 - x)
                    };
                    out.set(x, y, v);
                }
            }
            out
        }
    }
}
