//! Grayscale glyph rasters. Pixel values are ink intensities in `[0, 1]`:
//! `0` is background, `1` is full ink. PNG files use the usual dark-ink-on-
//! light-paper convention and are inverted on load and save.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

/// Inclusive-exclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl BBox {
    pub fn right(&self) -> usize {
        self.x + self.width
    }

    pub fn bottom(&self) -> usize {
        self.y + self.height
    }
}

impl GlyphImage {
    /// Blank (ink-free) image. Panics if a dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(
            width >= 1 && height >= 1,
            "image dimensions must be positive"
        );
        GlyphImage {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        assert!(
            width >= 1 && height >= 1,
            "image dimensions must be positive"
        );
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        GlyphImage {
            width,
            height,
            pixels: pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Builds a binary image from rows of `'#'` (ink) and anything else.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut img = GlyphImage::new(width.max(1), height.max(1));
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.bytes().enumerate() {
                if c == b'#' {
                    img.set(x, y, 1.0);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> f32 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.get(x as usize, y as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    #[inline]
    pub fn is_ink(&self, x: usize, y: usize) -> bool {
        self.get(x, y) >= 0.5
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> GlyphImage {
        GlyphImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Number of pixels with intensity ≥ 0.5.
    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v >= 0.5).count()
    }

    /// Sum of intensities.
    pub fn ink_mass(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum()
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Tight box around pixels with intensity > 0, if any.
    pub fn ink_bbox(&self) -> Option<BBox> {
        let mut lo = (usize::MAX, usize::MAX);
        let mut hi = (0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > 0.0 {
                    any = true;
                    lo = (lo.0.min(x), lo.1.min(y));
                    hi = (hi.0.max(x), hi.1.max(y));
                }
            }
        }
        any.then(|| BBox {
            x: lo.0,
            y: lo.1,
            width: hi.0 - lo.0 + 1,
            height: hi.1 - lo.1 + 1,
        })
    }

    pub fn crop(&self, b: BBox) -> GlyphImage {
        let mut out = GlyphImage::new(b.width, b.height);
        for y in 0..b.height {
            for x in 0..b.width {
                let (sx, sy) = (b.x + x, b.y + y);
                if sx < self.width && sy < self.height {
                    out.set(x, y, self.get(sx, sy));
                }
            }
        }
        out
    }

    /// Crop to the ink bounding box; `None` for blank images.
    pub fn crop_to_ink(&self) -> Option<GlyphImage> {
        self.ink_bbox().map(|b| self.crop(b))
    }

    /// Pastes `other` with its top-left at `(x0, y0)`, combining by maximum.
    pub fn blit_max(&mut self, other: &GlyphImage, x0: isize, y0: isize) {
        for y in 0..other.height {
            for x in 0..other.width {
                let (tx, ty) = (x0 + x as isize, y0 + y as isize);
                if tx >= 0 && ty >= 0 && (tx as usize) < self.width && (ty as usize) < self.height {
                    let (tx, ty) = (tx as usize, ty as usize);
                    let v = self.get(tx, ty).max(other.get(x, y));
                    self.set(tx, ty, v);
                }
            }
        }
    }

    /// 3×3 grayscale dilation (maximum filter), repeated `steps` times.
    pub fn dilate(&self, steps: usize) -> GlyphImage {
        (0..steps).fold(self.clone(), |img, _| img.filter3(f32::max, 0.0))
    }

    /// 3×3 grayscale erosion (minimum filter), repeated `steps` times.
    /// Pixels outside the image count as background.
    pub fn erode(&self, steps: usize) -> GlyphImage {
        (0..steps).fold(self.clone(), |img, _| img.filter3(f32::min, 1.0))
    }

    fn filter3(&self, op: fn(f32, f32) -> f32, init: f32) -> GlyphImage {
        let mut out = GlyphImage::new(self.width, self.height);
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                let mut acc = init;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        acc = op(acc, self.get_signed(x + dx, y + dy));
                    }
                }
                out.pixels[y as usize * self.width + x as usize] = acc;
            }
        }
        out
    }

    /// Bilinear sample at a real-valued position; outside reads as background.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_signed(xi, yi);
        let b = self.get_signed(xi + 1, yi);
        let c = self.get_signed(xi, yi + 1);
        let d = self.get_signed(xi + 1, yi + 1);
        a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy
    }

    /// Bilinear resize to exactly `width`×`height`, pixel centres aligned.
    pub fn resize(&self, width: usize, height: usize) -> GlyphImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = GlyphImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let src_x = (x as f64 + 0.5) * sx - 0.5;
                let src_y = (y as f64 + 0.5) * sy - 0.5;
                let v = self.sample_bilinear(src_x, src_y);
                out.set(x, y, v);
            }
        }
        out
    }

    /// Pads to a square around the ink, then resizes to `size`×`size`.
    /// Images that already have that size are returned unchanged.
    pub fn fit_to_canvas(&self, size: usize, margin: usize) -> GlyphImage {
        if self.width == size && self.height == size {
            return self.clone();
        }
        let Some(b) = self.ink_bbox() else {
            return GlyphImage::new(size, size);
        };
        let ink = self.crop(b);
        let side = b.width.max(b.height);
        let inner = size.saturating_sub(2 * margin).max(1);
        let scale = inner as f64 / side as f64;
        let w = ((b.width as f64 * scale).round() as usize).clamp(1, size);
        let h = ((b.height as f64 * scale).round() as usize).clamp(1, size);
        let resized = ink.resize(w, h);
        let mut out = GlyphImage::new(size, size);
        out.blit_max(
            &resized,
            ((size - w) / 2) as isize,
            ((size - h) / 2) as isize,
        );
        out
    }

    /// Intensity-weighted centre of mass.
    pub fn center_of_mass(&self) -> Option<(f64, f64)> {
        let mut m = 0.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = self.get(x, y) as f64;
                m += v;
                sx += v * x as f64;
                sy += v * y as f64;
            }
        }
        (m > 0.0).then(|| (sx / m, sy / m))
    }

    /// Integer shift; content moved outside is lost.
    pub fn shifted(&self, dx: isize, dy: isize) -> GlyphImage {
        let mut out = GlyphImage::new(self.width, self.height);
        out.blit_max(self, dx, dy);
        out
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<GlyphImage> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        // luminance conversion for RGB input
        let gray = decoded.to_luma8();
        let (w, h) = gray.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::ImageDecode {
                path: path.to_path_buf(),
                message: "zero-sized image".into(),
            });
        }
        let pixels = gray.pixels().map(|p| 1.0 - p.0[0] as f32 / 255.0).collect();
        Ok(GlyphImage::from_pixels(w as usize, h as usize, pixels))
    }

    /// 8-bit grayscale PNG bytes (dark ink on white).
    pub fn to_png_bytes(&self) -> Vec<u8> {
        let buf = image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            image::Luma([to_byte(1.0 - self.get(x as usize, y as usize))])
        });
        encode_png(image::DynamicImage::ImageLuma8(buf))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn encode_png(img: image::DynamicImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("PNG encoding to memory cannot fail");
    out.into_inner()
}

/// Intersection-over-union of the ink (≥ 0.5) pixel sets of two equally
/// sized images.
pub fn iou(a: &GlyphImage, b: &GlyphImage) -> f64 {
    assert_eq!(
        (a.width, a.height),
        (b.width, b.height),
        "iou needs equal sizes"
    );
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &q) in a.pixels.iter().zip(&b.pixels) {
        let (p, q) = (p >= 0.5, q >= 0.5);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Labels 8-connected ink components; returns the label grid (`0` for
/// background) and the component count.
pub fn label_components(img: &GlyphImage) -> (Vec<u32>, usize) {
    let (w, h) = (img.width, img.height);
    let mut labels = vec![0u32; w * h];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if labels[start] != 0 || img.pixels[start] < 0.5 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 && img.pixels[j] >= 0.5 {
                        labels[j] = count;
                        stack.push(j);
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

pub fn component_count(img: &GlyphImage) -> usize {
    label_components(img).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilation_of_a_point_is_a_3x3_block() {
        let mut img = GlyphImage::new(5, 5);
        img.set(2, 2, 1.0);
        let d = img.dilate(1);
        assert_eq!(d.ink_count(), 9);
        assert_eq!(d.erode(1).ink_count(), 1);
    }

    #[test]
    fn components_use_eight_connectivity() {
        let img = GlyphImage::from_ascii(&["#..", ".#.", "..#", "...", "##."]);
        assert_eq!(component_count(&img), 2);
    }

    #[test]
    fn png_round_trip_preserves_binary_images() {
        let img = GlyphImage::from_ascii(&["#.#", ".#."]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        img.save_png(&p).unwrap();
        assert_eq!(GlyphImage::load_png(&p).unwrap(), img);
    }

    #[test]
    fn corrupt_png_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"not a png").unwrap();
        let err = GlyphImage::load_png(&p).unwrap_err();
        assert!(err.to_string().contains("bad.png"));
    }
}
