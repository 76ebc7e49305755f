use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::LineSample;
use crate::error::{Error, Result};
use crate::image::GlyphImage;
use crate::rng::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    /// Horizontal step between windows, in downsampled pixels.
    pub stride: usize,
    /// Minimum similarity for a window to count as a detection.
    pub threshold: f64,
    /// Dilation applied to binarized line and prototypes before matching.
    pub dilation: usize,
    /// Box-filter reduction factor used for matching.
    pub downsample: usize,
    /// Vertical search around the centred position, full-resolution pixels.
    pub vertical_search: usize,
    /// Horizontal overlap allowed between consecutive detections, pixels.
    pub overlap: usize,
    /// Prototypes kept per class when fitting from lines.
    pub max_prototypes: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            stride: 1,
            threshold: 0.5,
            dilation: 1,
            downsample: 2,
            vertical_search: 6,
            overlap: 4,
            max_prototypes: 10,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::config("recognizer.stride", "must be positive"));
        }
        if self.downsample == 0 {
            return Err(Error::config("recognizer.downsample", "must be positive"));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("recognizer.threshold", "must lie in [-1, 1]"));
        }
        if self.max_prototypes == 0 {
            return Err(Error::config(
                "recognizer.max_prototypes",
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// Matching-ready form of one image: dilated, reduced, with its ink listed.
#[derive(Debug, Clone)]
struct Template {
    width: usize,
    height: usize,
    full_width: usize,
    /// (x, y, value) of the non-zero pixels.
    ink: Vec<(usize, usize, f64)>,
    sum: f64,
    sum_sq: f64,
    mean: f64,
    /// sqrt(Σ (v - mean)²) over all pixels.
    norm: f64,
}

fn prepare(img: &GlyphImage, cfg: &DecoderConfig) -> GlyphImage {
    let bin = img
        .map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
        .dilate(cfg.dilation);
    let f = cfg.downsample;
    if f == 1 {
        return bin;
    }
    let (w, h) = (bin.width().div_ceil(f), bin.height().div_ceil(f));
    let mut out = GlyphImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in 0..f {
                for dx in 0..f {
                    s += bin.get_signed((x * f + dx) as isize, (y * f + dy) as isize);
                }
            }
            out.set(x, y, s / (f * f) as f32);
        }
    }
    out
}

impl Template {
    fn new(img: &GlyphImage, cfg: &DecoderConfig) -> Template {
        let p = prepare(img, cfg);
        let n = (p.width() * p.height()) as f64;
        let mut ink = Vec::new();
        let (mut s, mut s2) = (0.0, 0.0);
        for y in 0..p.height() {
            for x in 0..p.width() {
                let v = p.get(x, y) as f64;
                if v > 0.0 {
                    ink.push((x, y, v));
                    s += v;
                    s2 += v * v;
                }
            }
        }
        let mean = s / n;
        Template {
            width: p.width(),
            height: p.height(),
            full_width: img.width(),
            ink,
            sum: s,
            sum_sq: s2,
            mean,
            norm: (s2 - n * mean * mean).max(0.0).sqrt(),
        }
    }
}

/// Summed-area tables of a prepared line and of its square.
struct Integral {
    width: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(img: &GlyphImage) -> Integral {
        let (w, h) = (img.width(), img.height());
        let mut sum = vec![0.0; (w + 1) * (h + 1)];
        let mut sq = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                let v = img.get(x, y) as f64;
                let i = (y + 1) * (w + 1) + x + 1;
                sum[i] = v + sum[i - 1] + sum[i - (w + 1)] - sum[i - w - 2];
                sq[i] = v * v + sq[i - 1] + sq[i - (w + 1)] - sq[i - w - 2];
            }
        }
        Integral { width: w, sum, sq }
    }

    fn rect(&self, t: &[f64], x: usize, y: usize, w: usize, h: usize) -> f64 {
        let s = self.width + 1;
        t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x]
    }
}

/// Correlation of `t` at `(tx, ty)` with the whole `a`, both images padded
/// with background to a common size.
fn padded_ncc(
    a: &GlyphImage,
    a_sum: f64,
    a_sq: f64,
    t: &Template,
    tx: isize,
    ty: isize,
    n: f64,
) -> f64 {
    let anorm = (a_sq - a_sum * a_sum / n).max(0.0).sqrt();
    let tnorm = (t.sum_sq - t.sum * t.sum / n).max(0.0).sqrt();
    if anorm < 1e-9 || tnorm < 1e-9 {
        return 0.0;
    }
    let cross: f64 = t
        .ink
        .iter()
        .map(|&(dx, dy, v)| v * a.get_signed(tx + dx as isize, ty + dy as isize) as f64)
        .sum();
    (cross - t.sum * a_sum / n) / (tnorm * anorm)
}

/// Zero-mean normalized cross-correlation of `t` placed at `(x, y)`.
fn ncc(line: &GlyphImage, integral: &Integral, t: &Template, x: usize, y: usize) -> f64 {
    let n = (t.width * t.height) as f64;
    let sw = integral.rect(&integral.sum, x, y, t.width, t.height);
    let sw2 = integral.rect(&integral.sq, x, y, t.width, t.height);
    let wnorm = (sw2 - sw * sw / n).max(0.0).sqrt();
    if wnorm < 1e-9 || t.norm < 1e-9 {
        return 0.0;
    }
    let cross: f64 = t
        .ink
        .iter()
        .map(|&(dx, dy, v)| v * line.get(x + dx, y + dy) as f64)
        .sum();
    (cross - t.mean * sw) / (t.norm * wnorm)
}

#[derive(Debug, Clone)]
pub struct PrototypeModel {
    labels: Vec<String>,
    templates: Vec<Vec<Template>>,
    shots: usize,
    pub config: DecoderConfig,
}

impl PrototypeModel {
    /// Prototypes per class, each cropped to its ink.
    pub fn new(
        classes: Vec<(String, Vec<GlyphImage>)>,
        config: DecoderConfig,
    ) -> Result<PrototypeModel> {
        config.validate()?;
        if classes.is_empty() {
            return Err(Error::InsufficientData(
                "prototype model needs at least one class".into(),
            ));
        }
        let mut labels = Vec::new();
        let mut templates = Vec::new();
        for (label, imgs) in classes {
            let crops: Vec<GlyphImage> = imgs.iter().filter_map(GlyphImage::crop_to_ink).collect();
            if crops.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "class {label} has no inked prototype"
                )));
            }
            templates.push(crops.iter().map(|c| Template::new(c, &config)).collect());
            labels.push(label);
        }
        let shots = templates.iter().map(Vec::len).min().unwrap_or(0);
        Ok(PrototypeModel {
            labels,
            templates,
            shots,
            config,
        })
    }

    /// Prototypes cut from the boxes of composed training lines, at most
    /// `max_prototypes` per class chosen by a seeded shuffle.
    pub fn from_lines(
        lines: &[LineSample],
        config: DecoderConfig,
        seed: u64,
    ) -> Result<PrototypeModel> {
        let mut by_class: BTreeMap<String, Vec<GlyphImage>> = BTreeMap::new();
        for line in lines {
            for (label, b) in line.transcription.iter().zip(&line.boxes) {
                by_class
                    .entry(label.clone())
                    .or_default()
                    .push(line.image.crop(*b));
            }
        }
        let classes = by_class
            .into_iter()
            .enumerate()
            .map(|(i, (label, mut imgs))| {
                imgs.shuffle(&mut derive_rng(seed, "prototypes", i as u64));
                imgs.truncate(config.max_prototypes);
                (label, imgs)
            })
            .collect();
        PrototypeModel::new(classes, config)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Smallest number of prototypes held by any class.
    pub fn shots(&self) -> usize {
        self.shots
    }

    fn narrowest(&self) -> usize {
        self.templates
            .iter()
            .flatten()
            .map(|t| t.full_width)
            .min()
            .unwrap_or(0)
    }

    /// Best similarity per class for a single symbol. Unlike line decoding
    /// the correlation covers the union of symbol and prototype, so a small
    /// prototype that matches only part of the symbol scores low.
    pub fn similarities(&self, img: &GlyphImage) -> Vec<f64> {
        let Some(crop) = img.crop_to_ink() else {
            return vec![0.0; self.labels.len()];
        };
        let a = prepare(&crop, &self.config);
        let (a_sum, a_sq) = a
            .pixels()
            .iter()
            .fold((0.0, 0.0), |(s, q), &v| (s + v as f64, q + (v * v) as f64));
        self.templates
            .iter()
            .map(|ts| {
                let mut best = f64::NEG_INFINITY;
                for t in ts {
                    // slide the smaller of the two inside the larger
                    let (dw, dh) = (
                        a.width() as isize - t.width as isize,
                        a.height() as isize - t.height as isize,
                    );
                    let n = (a.width().max(t.width) * a.height().max(t.height)) as f64;
                    for ty in dh.min(0)..=dh.max(0) {
                        for tx in dw.min(0)..=dw.max(0) {
                            best = best.max(padded_ncc(&a, a_sum, a_sq, t, tx, ty, n));
                        }
                    }
                }
                best
            })
            .collect()
    }

    pub fn classify(&self, img: &GlyphImage) -> Option<&str> {
        let sims = self.similarities(img);
        let best = (0..sims.len()).max_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(b.cmp(&a)))?;
        Some(&self.labels[best])
    }

    pub fn decode_all(&self, lines: &[GlyphImage]) -> Result<Vec<Vec<String>>> {
        lines.par_iter().map(|l| decode_line(l, self)).collect()
    }
}

/// Rows where a template of height `h` can sit: centred, plus or minus `span`.
fn vertical_range(line_h: usize, h: usize, span: usize) -> std::ops::RangeInclusive<usize> {
    let centre = (line_h - h) / 2;
    centre.saturating_sub(span)..=(centre + span).min(line_h - h)
}

struct Detection {
    start: usize,
    end: usize,
    gain: f64,
    class: usize,
}

/// Slides every prototype along the line, keeps for each position and class
/// the best similarity above threshold, and picks the left-to-right chain of
/// detections with the largest total width-weighted margin over threshold.
pub fn decode_line(line: &GlyphImage, model: &PrototypeModel) -> Result<Vec<String>> {
    let cfg = &model.config;
    let narrowest = model.narrowest();
    if line.width() < narrowest {
        return Err(Error::LineTooNarrow {
            line: line.width(),
            prototype: narrowest,
        });
    }
    let img = prepare(line, cfg);
    let integral = Integral::new(&img);
    let span = cfg.vertical_search.div_ceil(cfg.downsample);
    let overlap = cfg.overlap / cfg.downsample;

    let mut dets = Vec::new();
    let mut x = 0;
    while x < img.width() {
        for (class, ts) in model.templates.iter().enumerate() {
            let mut best: Option<(f64, usize)> = None;
            for t in ts {
                if x + t.width > img.width() || t.height > img.height() {
                    continue;
                }
                for y in vertical_range(img.height(), t.height, span) {
                    let s = ncc(&img, &integral, t, x, y);
                    if best.is_none_or(|(b, _)| s > b) {
                        best = Some((s, t.width));
                    }
                }
            }
            if let Some((s, w)) = best {
                if s > cfg.threshold {
                    dets.push(Detection {
                        start: x,
                        end: x + w.saturating_sub(overlap).max(1),
                        gain: (s - cfg.threshold) * w as f64,
                        class,
                    });
                }
            }
        }
        x += cfg.stride;
    }

    // weighted interval scheduling
    dets.sort_by(|a, b| {
        a.end
            .cmp(&b.end)
            .then(a.start.cmp(&b.start))
            .then(a.class.cmp(&b.class))
    });
    let ends: Vec<usize> = dets.iter().map(|d| d.end).collect();
    let mut best = vec![0.0f64; dets.len() + 1];
    let mut take = vec![false; dets.len()];
    let mut prev = vec![0usize; dets.len()];
    for (i, d) in dets.iter().enumerate() {
        prev[i] = ends.partition_point(|&e| e <= d.start);
        let with = d.gain + best[prev[i]];
        take[i] = with > best[i];
        best[i + 1] = if take[i] { with } else { best[i] };
    }
    let mut chosen = Vec::new();
    let mut i = dets.len();
    while i > 0 {
        if take[i - 1] {
            chosen.push(dets[i - 1].class);
            i = prev[i - 1];
        } else {
            i -= 1;
        }
    }
    chosen.reverse();
    Ok(chosen
        .into_iter()
        .map(|c| model.labels[c].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Range;
    use crate::compose::{compose_line, ComposePolicy, Source, SymbolInstance};
    use crate::eval::ser;
    use crate::generator::InkModel;
    use crate::procedural::{demo_alphabet, ProceduralConfig};
    use crate::rng::rng_from_seed;

    fn alphabet(n: usize) -> Vec<(String, GlyphImage)> {
        demo_alphabet(
            n,
            &ProceduralConfig::default(),
            &InkModel::default(),
            5,
            0.5,
        )
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, (_, img))| (format!("c{i}"), img))
        .collect()
    }

    fn model(alpha: &[(String, GlyphImage)]) -> PrototypeModel {
        let classes = alpha
            .iter()
            .map(|(l, img)| (l.clone(), vec![img.clone()]))
            .collect();
        PrototypeModel::new(classes, DecoderConfig::default()).unwrap()
    }

    #[test]
    fn ncc_of_a_template_with_itself_is_one() {
        let alpha = alphabet(1);
        let cfg = DecoderConfig::default();
        let crop = alpha[0].1.crop_to_ink().unwrap();
        let t = Template::new(&crop, &cfg);
        let p = prepare(&crop, &cfg);
        assert!((ncc(&p, &Integral::new(&p), &t, 0, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_prototype_lines_decode_perfectly() {
        let alpha = alphabet(10);
        let m = model(&alpha);
        let mut rng = rng_from_seed(4);
        for _ in 0..10 {
            let idx: Vec<usize> = (0..6)
                .map(|_| rand::Rng::random_range(&mut rng, 0..alpha.len()))
                .collect();
            let symbols: Vec<SymbolInstance> = idx
                .iter()
                .map(|&i| SymbolInstance {
                    image: alpha[i].1.clone(),
                    label: alpha[i].0.clone(),
                    source: Source::Bpl,
                })
                .collect();
            let policy = ComposePolicy {
                gap: Range { min: 2, max: 8 },
                ..ComposePolicy::identity(0)
            };
            let line = compose_line(&symbols, &policy, &mut rng).unwrap();
            let hyp = decode_line(&line.image, &m).unwrap();
            assert_eq!(
                ser(&hyp, &line.transcription).unwrap().0,
                0.0,
                "{hyp:?} vs {:?}",
                line.transcription
            );
        }
    }

    #[test]
    fn blank_line_decodes_to_nothing() {
        let m = model(&alphabet(3));
        assert!(decode_line(&GlyphImage::new(400, 105), &m)
            .unwrap()
            .is_empty());
        assert!(matches!(
            decode_line(&GlyphImage::new(3, 105), &m),
            Err(Error::LineTooNarrow { .. })
        ));
    }

    #[test]
    fn classification_ignores_prototype_order() {
        let alpha = alphabet(4);
        let mut rng = rng_from_seed(1);
        let shots: Vec<(String, Vec<GlyphImage>)> = alpha
            .iter()
            .map(|(l, img)| {
                let p = crate::augment::AugmentParams::default();
                let v = (0..5)
                    .map(|_| crate::augment::augment(img, &p, &mut rng).unwrap())
                    .collect();
                (l.clone(), v)
            })
            .collect();
        let reversed = shots
            .iter()
            .map(|(l, v)| (l.clone(), v.iter().rev().cloned().collect()))
            .collect();
        let a = PrototypeModel::new(shots, DecoderConfig::default()).unwrap();
        let b = PrototypeModel::new(reversed, DecoderConfig::default()).unwrap();
        assert_eq!(a.shots(), 5);
        for (l, img) in &alpha {
            let line = img.crop_to_ink().unwrap();
            let sims = a.similarities(&line);
            let argmax = (0..sims.len())
                .max_by(|&x, &y| sims[x].total_cmp(&sims[y]))
                .unwrap();
            assert_eq!(a.classify(&line), Some(a.labels()[argmax].as_str()));
            assert_eq!(a.classify(&line), b.classify(&line));
            assert_eq!(a.classify(&line), Some(l.as_str()), "{l} {sims:?}");
        }
    }
}
