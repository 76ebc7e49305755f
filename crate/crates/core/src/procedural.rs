//! Synthetic online glyphs drawn from a small family of directional
//! sub-strokes. They stand in for held-out stroke data when fitting a
//! library, and for seed glyphs in demos and tests.
//!
//! No family contains the reverse of another, so stroke direction is
//! recoverable from shape alone.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generator::{rasterize, InkModel};
use crate::geometry::{self, Point};
use crate::image::{iou, GlyphImage};
use crate::rng::{derive_rng, Rng};
use crate::stroke_model::{
    fit_library_from_corpus, LibraryConfig, OnlineGlyph, PrimitiveLibrary, Relation,
};

/// Sub-stroke families: straight headings, then arcs as (start heading,
/// signed turn), in degrees with y pointing down.
const LINES: [f64; 3] = [0.0, 90.0, 120.0];
const ARCS: [(f64, f64); 4] = [(0.0, 90.0), (90.0, -90.0), (90.0, 90.0), (180.0, -90.0)];

/// Number of distinct sub-stroke families.
pub const FAMILIES: usize = LINES.len() + ARCS.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProceduralConfig {
    pub max_parts: usize,
    pub max_subparts: usize,
    /// Sub-stroke arc length range, pixels.
    pub min_length: f64,
    pub max_length: f64,
    /// Writer jitter on every heading, degrees.
    pub heading_jitter: f64,
    /// Per-point jitter, pixels.
    pub point_noise: f64,
    /// Minimum turn between consecutive sub-strokes, degrees.
    pub min_corner: f64,
    pub canvas: usize,
    /// Largest glyph side on the canvas.
    pub max_extent: f64,
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        ProceduralConfig {
            max_parts: 3,
            max_subparts: 3,
            min_length: 22.0,
            max_length: 36.0,
            heading_jitter: 3.0,
            point_noise: 0.15,
            min_corner: 60.0,
            canvas: 105,
            max_extent: 80.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Family {
    heading: f64,
    turn: f64,
}

fn families() -> Vec<Family> {
    LINES
        .iter()
        .map(|&h| Family {
            heading: h,
            turn: 0.0,
        })
        .chain(ARCS.iter().map(|&(h, t)| Family {
            heading: h,
            turn: t,
        }))
        .collect()
}

fn wrap_deg(a: f64) -> f64 {
    (a + 180.0).rem_euclid(360.0) - 180.0
}

/// Points at unit spacing from `start`, turning uniformly by `turn` degrees.
fn draw(start: Point, heading: f64, turn: f64, length: f64) -> Vec<Point> {
    let steps = length.round().max(2.0) as usize;
    let ds = length / steps as f64;
    let mut pts = vec![start];
    let mut p = start;
    for i in 0..steps {
        let h = (heading + turn * (i as f64 + 0.5) / steps as f64).to_radians();
        p = p + Point::new(h.cos(), h.sin()) * ds;
        pts.push(p);
    }
    pts
}

fn draw_part(start: Point, cfg: &ProceduralConfig, rng: &mut Rng) -> Vec<Vec<Point>> {
    let fams = families();
    let jitter = Normal::new(0.0, cfg.heading_jitter.max(1e-12)).expect("finite sigma");
    let n = rng.random_range(1..=cfg.max_subparts);
    let mut subs: Vec<Vec<Point>> = Vec::new();
    let mut pen = start;
    let mut last_heading: Option<f64> = None;
    for _ in 0..n {
        let allowed: Vec<&Family> = fams
            .iter()
            .filter(|f| {
                last_heading.is_none_or(|h| {
                    let turn = wrap_deg(f.heading - h).abs();
                    turn >= cfg.min_corner && turn <= 150.0
                })
            })
            .collect();
        let Some(f) = allowed.choose(rng) else { break };
        let heading = f.heading + jitter.sample(rng);
        let length = rng.random_range(cfg.min_length..=cfg.max_length);
        let pts = draw(pen, heading, f.turn, length);
        pen = *pts.last().unwrap();
        last_heading = Some(heading + f.turn);
        subs.push(pts);
    }
    subs
}

/// One random glyph: up to `max_parts` parts, later ones attached to earlier
/// ones or placed freely, centred on the canvas.
pub fn random_glyph(cfg: &ProceduralConfig, rng: &mut Rng) -> OnlineGlyph {
    let kappa = rng.random_range(1..=cfg.max_parts);
    let mut parts: Vec<Vec<Vec<Point>>> = Vec::new();
    let mut relations = Vec::new();
    for i in 0..kappa {
        let polylines = OnlineGlyph {
            parts: parts.clone(),
            relations: relations.clone(),
        }
        .part_polylines();
        let (rel, start) = if i == 0 {
            let p = Point::new(0.0, 0.0);
            (Relation::Independent { position: p }, p)
        } else {
            let target = rng.random_range(0..i);
            let line = &polylines[target];
            match rng.random_range(0..4) {
                0 => {
                    let (lo, hi) = geometry::bounds(polylines.iter().flatten().copied()).unwrap();
                    let p = Point::new(
                        rng.random_range(lo.x..=hi.x + 15.0),
                        rng.random_range(lo.y..=hi.y + 15.0),
                    );
                    (Relation::Independent { position: p }, p)
                }
                1 => (Relation::AtStart { target }, line[0]),
                2 => (Relation::AtEnd { target }, *line.last().unwrap()),
                _ => {
                    let tau = rng.random_range(0.25..=0.75);
                    (
                        Relation::Along { target, tau },
                        geometry::point_at_fraction(line, tau),
                    )
                }
            }
        };
        parts.push(draw_part(start, cfg, rng));
        relations.push(rel);
    }
    let mut glyph = OnlineGlyph { parts, relations };
    if cfg.point_noise > 0.0 {
        let noise = Normal::new(0.0, cfg.point_noise).expect("finite sigma");
        // joints and attachment points stay put so the structure is exact
        for sub in glyph.parts.iter_mut().flatten() {
            let last = sub.len() - 1;
            for p in &mut sub[1..last] {
                *p = *p + Point::new(noise.sample(rng), noise.sample(rng));
            }
        }
    }
    place(&mut glyph, cfg);
    glyph
}

/// Scales the glyph down to `max_extent` if needed and centres its bounding
/// box on the canvas.
fn place(glyph: &mut OnlineGlyph, cfg: &ProceduralConfig) {
    let (lo, hi) = geometry::bounds(glyph.parts.iter().flatten().flatten().copied())
        .expect("glyph has points");
    let side = (hi.x - lo.x).max(hi.y - lo.y);
    let s = if side > cfg.max_extent {
        cfg.max_extent / side
    } else {
        1.0
    };
    let mid = (lo + hi) * 0.5;
    let centre = Point::new(cfg.canvas as f64 / 2.0, cfg.canvas as f64 / 2.0);
    let map = |p: Point| centre + (p - mid) * s;
    for p in glyph.parts.iter_mut().flatten().flatten() {
        *p = map(*p);
    }
    for r in &mut glyph.relations {
        if let Relation::Independent { position } = r {
            *position = map(*position);
        }
    }
}

/// `n` random glyphs, glyph `i` drawn from its own derived stream.
pub fn stroke_corpus(n: usize, cfg: &ProceduralConfig, seed: u64) -> Vec<OnlineGlyph> {
    (0..n)
        .map(|i| random_glyph(cfg, &mut derive_rng(seed, "corpus", i as u64)))
        .collect()
}

pub fn render_online(glyph: &OnlineGlyph, ink: &InkModel, canvas: usize) -> Result<GlyphImage> {
    let img = rasterize(&glyph.part_polylines(), ink.pen_width, canvas, canvas)?;
    Ok(img.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))
}

/// Spread of the affine distortion separating two hand-drawn instances of
/// one glyph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WriterNoise {
    pub rotation_deg: f64,
    pub log_scale: f64,
    pub shear: f64,
}

impl Default for WriterNoise {
    fn default() -> Self {
        WriterNoise {
            rotation_deg: 6.0,
            log_scale: 0.08,
            shear: 0.08,
        }
    }
}

/// Another instance of `glyph`: a random rotation, per-axis scale and shear
/// about the centre of its bounding box, each drawn from a normal clamped at
/// two standard deviations.
pub fn writer_variant(glyph: &OnlineGlyph, noise: &WriterNoise, rng: &mut Rng) -> OnlineGlyph {
    let mut draw = |sd: f64| {
        if sd > 0.0 {
            Normal::new(0.0, sd)
                .expect("finite sigma")
                .sample(rng)
                .clamp(-2.0 * sd, 2.0 * sd)
        } else {
            0.0
        }
    };
    let angle = draw(noise.rotation_deg).to_radians();
    let (sx, sy) = (draw(noise.log_scale).exp(), draw(noise.log_scale).exp());
    let shear = draw(noise.shear);
    let (lo, hi) = geometry::bounds(glyph.parts.iter().flatten().flatten().copied())
        .expect("glyph has points");
    let mid = (lo + hi) * 0.5;
    let map = |p: Point| {
        let v = p - mid;
        mid + Point::new((v.x + shear * v.y) * sx, v.y * sy).rotate(angle)
    };
    let mut out = glyph.clone();
    for p in out.parts.iter_mut().flatten().flatten() {
        *p = map(*p);
    }
    for r in &mut out.relations {
        if let Relation::Independent { position } = r {
            *position = map(*position);
        }
    }
    out
}

/// Largest IoU between `a` and `b` after aligning their centres of mass
/// and dilating both by `radius`.
pub fn aligned_iou(a: &GlyphImage, b: &GlyphImage, radius: usize) -> f64 {
    let (Some(ca), Some(cb)) = (a.center_of_mass(), b.center_of_mass()) else {
        return 0.0;
    };
    let shifted = b.shifted(
        (ca.0 - cb.0).round() as isize,
        (ca.1 - cb.1).round() as isize,
    );
    iou(&a.dilate(radius), &shifted.dilate(radius))
}

/// `classes` structurally distinct glyphs: each has at most `max_iou`
/// aligned overlap with every earlier one.
pub fn demo_alphabet(
    classes: usize,
    cfg: &ProceduralConfig,
    ink: &InkModel,
    seed: u64,
    max_iou: f64,
) -> Result<Vec<(OnlineGlyph, GlyphImage)>> {
    let mut out: Vec<(OnlineGlyph, GlyphImage)> = Vec::new();
    let mut attempt = 0u64;
    while out.len() < classes {
        let glyph = random_glyph(cfg, &mut derive_rng(seed, "alphabet", attempt));
        attempt += 1;
        let img = render_online(&glyph, ink, cfg.canvas)?;
        if out
            .iter()
            .all(|(_, other)| aligned_iou(&img, other, 0) <= max_iou)
        {
            out.push((glyph, img));
        }
    }
    Ok(out)
}

/// Library fitted on a procedural corpus of `glyphs` glyphs.
pub fn demo_library(config: &LibraryConfig, glyphs: usize, seed: u64) -> Result<PrimitiveLibrary> {
    let corpus = stroke_corpus(
        glyphs,
        &ProceduralConfig {
            canvas: config.canvas,
            ..ProceduralConfig::default()
        },
        seed,
    );
    fit_library_from_corpus(&corpus, config, seed)
}

/// Names of the class folders of a demo alphabet.
pub fn class_name(index: usize) -> String {
    format!("c{index:02}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stroke_model::normalize_substroke;

    #[test]
    fn glyphs_fit_the_canvas_and_respect_counts() {
        let cfg = ProceduralConfig::default();
        let mut rng = rng_from_seed(5);
        for _ in 0..200 {
            let g = random_glyph(&cfg, &mut rng);
            assert!((1..=cfg.max_parts).contains(&g.parts.len()));
            assert_eq!(g.parts.len(), g.relations.len());
            assert!(matches!(g.relations[0], Relation::Independent { .. }));
            for part in &g.parts {
                assert!((1..=cfg.max_subparts).contains(&part.len()));
            }
            let (lo, hi) = geometry::bounds(g.parts.iter().flatten().flatten().copied()).unwrap();
            assert!(lo.x >= 0.0 && lo.y >= 0.0 && hi.x <= 105.0 && hi.y <= 105.0);
        }
    }

    #[test]
    fn attachments_start_where_they_say() {
        let cfg = ProceduralConfig {
            point_noise: 0.0,
            ..ProceduralConfig::default()
        };
        for g in stroke_corpus(100, &cfg, 3) {
            let lines = g.part_polylines();
            for (i, r) in g.relations.iter().enumerate() {
                let start = lines[i][0];
                let want = match *r {
                    Relation::Independent { position } => position,
                    Relation::AtStart { target } => lines[target][0],
                    Relation::AtEnd { target } => *lines[target].last().unwrap(),
                    Relation::Along { target, tau } => {
                        geometry::point_at_fraction(&lines[target], tau)
                    }
                };
                assert!(start.dist(want) < 1e-6, "{r:?}");
            }
        }
    }

    fn family_shape(f: &Family, reversed: bool) -> Vec<f64> {
        let mut pts = draw(Point::ORIGIN, f.heading, f.turn, 24.0);
        if reversed {
            pts.reverse();
        }
        normalize_substroke(&pts, 10).unwrap().flatten()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn families_and_their_reverses_are_separable() {
        // far apart relative to writer jitter, which moves points by ~0.05
        let fams = families();
        for (i, f) in fams.iter().enumerate() {
            for (j, g) in fams.iter().enumerate() {
                let rev = dist(&family_shape(f, true), &family_shape(g, false));
                assert!(rev > 0.5, "reverse of {i} vs {j}: {rev}");
                if i < j {
                    let d = dist(&family_shape(f, false), &family_shape(g, false));
                    assert!(d > 0.5, "{i} vs {j}: {d}");
                }
            }
        }
    }

    #[test]
    fn writer_variants_are_close_but_not_equal() {
        let cfg = ProceduralConfig::default();
        let ink = InkModel::default();
        let g = random_glyph(&cfg, &mut rng_from_seed(9));
        let base = render_online(&g, &ink, cfg.canvas).unwrap();
        let zero = WriterNoise {
            rotation_deg: 0.0,
            log_scale: 0.0,
            shear: 0.0,
        };
        assert_eq!(writer_variant(&g, &zero, &mut rng_from_seed(1)), g);
        let mut rng = rng_from_seed(2);
        for _ in 0..20 {
            let v = writer_variant(&g, &WriterNoise::default(), &mut rng);
            assert_ne!(v, g);
            let img = render_online(&v, &ink, cfg.canvas).unwrap();
            assert!(aligned_iou(&base, &img, 2) > 0.4);
        }
    }

    #[test]
    fn alphabet_is_distinct_and_deterministic() {
        let cfg = ProceduralConfig::default();
        let ink = InkModel::default();
        let a = demo_alphabet(6, &cfg, &ink, 2, 0.5).unwrap();
        let b = demo_alphabet(6, &cfg, &ink, 2, 0.5).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert!(aligned_iou(&a[i].1, &a[j].1, 0) <= 0.5);
            }
        }
    }
}
