//! Synthetic text lines: symbols concatenated left to right on a shared
//! baseline, plus the four dataset recipes (pure BPL, pure augmented real,
//! and the line- or symbol-level mixtures of the two).

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Range;
use crate::error::{Error, Result};
use crate::image::{BBox, GlyphImage};
use crate::rng::{derive_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Bpl,
    RealAug,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Bpl => "bpl",
            Source::RealAug => "real_aug",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolInstance {
    pub image: GlyphImage,
    pub label: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposePolicy {
    /// Horizontal gap between adjacent ink boxes; negative values overlap.
    pub gap: Range<i32>,
    pub vertical_jitter: Range<i32>,
    pub baseline_height: usize,
    /// Probability that a pixel is turned to ink after composition.
    pub background_noise: f64,
    /// Symbols per line, drawn uniformly.
    pub length: Range<usize>,
}

impl Default for ComposePolicy {
    fn default() -> Self {
        ComposePolicy {
            gap: Range { min: -4, max: 8 },
            vertical_jitter: Range { min: -3, max: 3 },
            baseline_height: 105,
            background_noise: 0.001,
            length: Range { min: 4, max: 10 },
        }
    }
}

impl ComposePolicy {
    /// No jitter, no noise, fixed gap.
    pub fn identity(gap: i32) -> Self {
        ComposePolicy {
            gap: Range::fixed(gap),
            vertical_jitter: Range::fixed(0),
            background_noise: 0.0,
            ..ComposePolicy::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gap.min > self.gap.max {
            return Err(Error::config("compose.gap", "min exceeds max"));
        }
        if self.vertical_jitter.min > self.vertical_jitter.max {
            return Err(Error::config("compose.vertical_jitter", "min exceeds max"));
        }
        if self.baseline_height == 0 {
            return Err(Error::config("compose.baseline_height", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.background_noise) {
            return Err(Error::config(
                "compose.background_noise",
                "must lie in [0, 1)",
            ));
        }
        if self.length.min == 0 || self.length.min > self.length.max {
            return Err(Error::config("compose.length", "need 1 <= min <= max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSample {
    pub image: GlyphImage,
    pub transcription: Vec<String>,
    pub boxes: Vec<BBox>,
    pub sources: Vec<Source>,
    /// Index of each symbol within its class and source pool, when drawn
    /// from pools.
    pub instances: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixMode {
    /// Each line is drawn from a single source; `rho` counts lines.
    HomL,
    /// Each symbol picks its source; `rho` counts symbols.
    HetL,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixPolicy {
    pub mode: MixMode,
    pub rho: f64,
}

impl Default for MixPolicy {
    fn default() -> Self {
        MixPolicy {
            mode: MixMode::HomL,
            rho: 0.5,
        }
    }
}

impl MixPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config("mix.rho", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn draw(range: Range<i32>, rng: &mut Rng) -> i32 {
    rng.random_range(range.min..=range.max)
}

/// Shrinks symbols taller than the line, keeping their aspect ratio.
fn fit_height(img: GlyphImage, h: usize) -> GlyphImage {
    if img.height() <= h {
        return img;
    }
    let w = ((img.width() * h) as f64 / img.height() as f64)
        .round()
        .max(1.0) as usize;
    let small = img.resize(w, h);
    small.crop_to_ink().unwrap_or(small)
}

/// Places `symbols` left to right. Each symbol is cropped to its ink, centred
/// vertically, nudged by jitter, and merged by pixelwise maximum. A negative
/// gap is limited so that every symbol still starts right of its predecessor.
pub fn compose_line(
    symbols: &[SymbolInstance],
    policy: &ComposePolicy,
    rng: &mut Rng,
) -> Result<LineSample> {
    policy.validate()?;
    if symbols.is_empty() {
        return Err(Error::EmptyLine);
    }
    let h = policy.baseline_height;
    let crops = symbols
        .iter()
        .map(|s| {
            s.image
                .crop_to_ink()
                .ok_or(Error::EmptyGlyph)
                .map(|c| fit_height(c, h))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut boxes = Vec::with_capacity(crops.len());
    let mut x = 0i64;
    for (i, c) in crops.iter().enumerate() {
        if i > 0 {
            let prev = &crops[i - 1];
            let max_overlap = prev.width().min(c.width()) as i64 - 1;
            let gap = (draw(policy.gap, rng) as i64).max(-max_overlap);
            x += prev.width() as i64 + gap;
        }
        let jitter = draw(policy.vertical_jitter, rng) as i64;
        let y = ((h - c.height()) as i64 / 2 + jitter).clamp(0, (h - c.height()) as i64);
        boxes.push(BBox {
            x: x as usize,
            y: y as usize,
            width: c.width(),
            height: c.height(),
        });
    }
    let last = boxes.last().unwrap();
    let mut image = GlyphImage::new(last.x + last.width, h);
    for (c, b) in crops.iter().zip(&boxes) {
        image.blit_max(c, b.x as isize, b.y as isize);
    }
    if policy.background_noise > 0.0 {
        let p = policy.background_noise;
        image = image.map(|v| if rng.random_bool(p) { 1.0 } else { v });
    }
    Ok(LineSample {
        image,
        transcription: symbols.iter().map(|s| s.label.clone()).collect(),
        boxes,
        sources: symbols.iter().map(|s| s.source).collect(),
        instances: Vec::new(),
    })
}

/// Per-class instance lists for each source.
#[derive(Debug, Clone, Default)]
pub struct SymbolPools {
    pools: BTreeMap<String, BTreeMap<Source, Vec<GlyphImage>>>,
}

impl SymbolPools {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class: &str, source: Source, image: GlyphImage) {
        self.pools
            .entry(class.to_string())
            .or_default()
            .entry(source)
            .or_default()
            .push(image);
    }

    pub fn extend(
        &mut self,
        class: &str,
        source: Source,
        images: impl IntoIterator<Item = GlyphImage>,
    ) {
        for img in images {
            self.insert(class, source, img);
        }
    }

    /// Sorted class ids.
    pub fn classes(&self) -> Vec<String> {
        self.pools.keys().cloned().collect()
    }

    pub fn get(&self, class: &str, source: Source) -> &[GlyphImage] {
        self.pools
            .get(class)
            .and_then(|m| m.get(&source))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn pick(&self, class: &str, source: Source, rng: &mut Rng) -> Result<(usize, SymbolInstance)> {
        let pool = self.get(class, source);
        if pool.is_empty() {
            return Err(Error::PoolExhausted {
                class: class.to_string(),
                origin: source.to_string(),
            });
        }
        let i = rng.random_range(0..pool.len());
        Ok((
            i,
            SymbolInstance {
                image: pool[i].clone(),
                label: class.to_string(),
                source,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TextSource {
    /// Lengths from the policy, labels i.i.d. uniform over the alphabet.
    Uniform { alphabet: Vec<String> },
    /// Fixed transcriptions, cycled.
    Lines(Vec<Vec<String>>),
}

impl TextSource {
    fn line(&self, policy: &ComposePolicy, seed: u64, index: usize) -> Result<Vec<String>> {
        match self {
            TextSource::Uniform { alphabet } => {
                if alphabet.is_empty() {
                    return Err(Error::config("alphabet", "is empty"));
                }
                let mut rng = derive_rng(seed, "text", index as u64);
                let len = rng.random_range(policy.length.min..=policy.length.max);
                Ok((0..len)
                    .map(|_| alphabet[rng.random_range(0..alphabet.len())].clone())
                    .collect())
            }
            TextSource::Lines(lines) => {
                if lines.is_empty() {
                    return Err(Error::config("text", "transcription list is empty"));
                }
                let t = &lines[index % lines.len()];
                if t.is_empty() {
                    return Err(Error::EmptyLine);
                }
                Ok(t.clone())
            }
        }
    }
}

/// Which lines of a line-level mixture are drawn from BPL: exactly
/// `round(rho * num_lines)` of them, chosen by a seeded permutation.
pub fn homl_assignment(rho: f64, num_lines: usize, seed: u64) -> Vec<bool> {
    let n_bpl = (rho * num_lines as f64).round() as usize;
    let mut order: Vec<usize> = (0..num_lines).collect();
    order.shuffle(&mut derive_rng(seed, "homl", 0));
    let mut bpl = vec![false; num_lines];
    for &i in &order[..n_bpl.min(num_lines)] {
        bpl[i] = true;
    }
    bpl
}

/// Builds `num_lines` lines. Line `i` depends only on `(seed, i)` and the
/// source assignment, so each line is reproducible independently.
pub fn build_dataset(
    pools: &SymbolPools,
    mix: &MixPolicy,
    policy: &ComposePolicy,
    num_lines: usize,
    text: &TextSource,
    seed: u64,
) -> Result<Vec<LineSample>> {
    mix.validate()?;
    policy.validate()?;
    let homl = match mix.mode {
        MixMode::HomL => Some(homl_assignment(mix.rho, num_lines, seed)),
        MixMode::HetL => None,
    };
    (0..num_lines)
        .into_par_iter()
        .map(|i| {
            let labels = text.line(policy, seed, i)?;
            let mut rng = derive_rng(seed, "line", i as u64);
            let symbols = labels
                .iter()
                .map(|label| {
                    let source = match &homl {
                        Some(a) if a[i] => Source::Bpl,
                        Some(_) => Source::RealAug,
                        None if rng.random_bool(mix.rho) => Source::Bpl,
                        None => Source::RealAug,
                    };
                    pools.pick(label, source, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let (instances, symbols): (Vec<usize>, Vec<SymbolInstance>) =
                symbols.into_iter().unzip();
            let mut line = compose_line(&symbols, policy, &mut rng)?;
            line.instances = instances;
            Ok(line)
        })
        .collect()
}
