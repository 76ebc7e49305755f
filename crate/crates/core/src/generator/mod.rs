//! Token-level variation and rendering: new exemplars of a glyph drawn from
//! the weighted mixture of its parses.

mod render;
mod token;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use render::{gaussian_blur, rasterize, render, resolve_trajectories};
pub use token::{sample_token, PartAffine, TokenParams, TokenSigmas};

use crate::error::{Error, Result};
use crate::image::GlyphImage;
use crate::parser::{parse_glyph, ParseSet, ParserConfig};
use crate::rng::{derive_rng, derive_seed, Rng};
use crate::stroke_model::{PrimitiveLibrary, SymbolProgram};

/// Token draws retried when a render falls off the canvas.
const OFF_CANVAS_RETRIES: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InkModel {
    /// Pen diameter, pixels.
    pub pen_width: f64,
    pub blur_sigma: f64,
    /// Probability that an inked pixel is dropped.
    pub ink_noise: f64,
}

impl Default for InkModel {
    fn default() -> Self {
        InkModel {
            pen_width: 3.0,
            blur_sigma: 0.0,
            ink_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Zero,
    Subtle,
    Default,
    Wild,
}

impl Preset {
    pub fn sigmas(self) -> TokenSigmas {
        let at = |f: f64| TokenSigmas {
            trajectory: 0.02 * f,
            rotation: 0.1 * f,
            part_log_scale: 0.1 * f,
            shear: 0.05 * f,
            start: 2.0 * f,
            global_log_scale: 0.1 * f,
            translation: 2.0 * f,
        };
        match self {
            Preset::Zero => TokenSigmas::ZERO,
            Preset::Subtle => at(0.5),
            Preset::Default => at(1.0),
            Preset::Wild => at(2.0),
        }
    }

    pub fn parse(name: &str) -> Result<Preset> {
        match name {
            "zero" => Ok(Preset::Zero),
            "subtle" => Ok(Preset::Subtle),
            "default" => Ok(Preset::Default),
            "wild" => Ok(Preset::Wild),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Number of top-ranked parses in the mixture.
    pub k: usize,
    /// Exemplars drawn per glyph when the caller does not say otherwise.
    pub n: usize,
    pub sigmas: TokenSigmas,
    pub ink: InkModel,
    /// Threshold rendered images at 0.5.
    pub binarize: bool,
    /// Use each parse's fast-mode program as is instead of refitting offsets.
    pub fast_mode: bool,
    pub parser: ParserConfig,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            k: 10,
            n: 9,
            sigmas: Preset::Default.sigmas(),
            ink: InkModel::default(),
            binarize: true,
            fast_mode: false,
            parser: ParserConfig::default(),
            seed: 0,
        }
    }
}

impl GenerationConfig {
    /// Only the most likely parse, with its program used as traced.
    pub fn fast() -> Self {
        GenerationConfig {
            k: 1,
            fast_mode: true,
            ..GenerationConfig::default()
        }
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.sigmas = preset.sigmas();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.parser.walk.k_max {
            return Err(Error::config(
                "k",
                format!("must be in 1..={}", self.parser.walk.k_max),
            ));
        }
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if !(self.ink.pen_width > 0.0) {
            return Err(Error::config("ink.pen_width", "must be positive"));
        }
        if !(self.ink.blur_sigma >= 0.0) {
            return Err(Error::config("ink.blur_sigma", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.ink.ink_noise) {
            return Err(Error::config("ink.ink_noise", "must be in [0, 1)"));
        }
        let s = &self.sigmas;
        let all = [
            s.trajectory,
            s.rotation,
            s.part_log_scale,
            s.shear,
            s.start,
            s.global_log_scale,
            s.translation,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("sigmas", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// One generated image and the choices that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub image: GlyphImage,
    pub parse_index: usize,
    pub token_seed: u64,
}

/// Index drawn with probability proportional to `weights`.
pub fn select_parse(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Renders `psi` with a token drawn from `token_seed`; a token whose render
/// falls off the canvas is redrawn from a derived seed.
pub fn render_token(
    psi: &SymbolProgram,
    token_seed: u64,
    lib: &PrimitiveLibrary,
    cfg: &GenerationConfig,
) -> Result<GlyphImage> {
    let size = cfg.parser.canvas;
    let mut last = None;
    for attempt in 0..OFF_CANVAS_RETRIES {
        let seed = if attempt == 0 {
            token_seed
        } else {
            derive_seed(token_seed, "retry", attempt)
        };
        let theta = sample_token(
            psi,
            &cfg.sigmas,
            lib.config.resample,
            &mut crate::rng::rng_from_seed(seed),
        );
        match render(psi, &theta, lib, &cfg.ink, size, size) {
            Ok(img) if cfg.binarize => return Ok(img.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })),
            Ok(img) => return Ok(img),
            Err(e @ Error::OffCanvas { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Draws `n` exemplars from the top `cfg.k` parses of `parses`: each picks a
/// parse by its renormalised weight, then renders a fresh token.
pub fn generate_from_parses(
    parses: &ParseSet,
    n: usize,
    lib: &PrimitiveLibrary,
    cfg: &GenerationConfig,
    rng: &mut Rng,
) -> Result<Vec<Exemplar>> {
    cfg.validate()?;
    let top = &parses.parses[..cfg.k.min(parses.parses.len())];
    let weights: Vec<f64> = top.iter().map(|p| p.weight).collect();
    let programs: Vec<SymbolProgram> = top
        .iter()
        .map(|p| {
            if cfg.fast_mode {
                p.program.clone()
            } else {
                refit_or_traced(p, lib, cfg)
            }
        })
        .collect();
    let picks: Vec<(usize, u64)> = (0..n)
        .map(|_| (select_parse(&weights, rng), rng.random()))
        .collect();
    picks
        .into_par_iter()
        .map(|(parse_index, token_seed)| {
            Ok(Exemplar {
                image: render_token(&programs[parse_index], token_seed, lib, cfg)?,
                parse_index,
                token_seed,
            })
        })
        .collect()
}

/// The parse's program with shrunk offsets, unless that type itself renders
/// off the canvas; then the traced program.
fn refit_or_traced(
    p: &crate::parser::Parse,
    lib: &PrimitiveLibrary,
    cfg: &GenerationConfig,
) -> SymbolProgram {
    let refit = crate::parser::parse_to_program(p, lib, &cfg.parser.convert, false);
    let size = cfg.parser.canvas;
    let theta = TokenParams::identity(&refit, lib.config.resample);
    match render(&refit, &theta, lib, &cfg.ink, size, size) {
        Err(Error::OffCanvas { .. }) => p.program.clone(),
        _ => refit,
    }
}

/// One-shot generation: parses `img` and draws `n` new exemplars.
pub fn generate_exemplars(
    img: &GlyphImage,
    n: usize,
    lib: &PrimitiveLibrary,
    cfg: &GenerationConfig,
    rng: &mut Rng,
) -> Result<Vec<GlyphImage>> {
    cfg.validate()?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let parses = parse_glyph(img, lib, &cfg.parser, rng)?;
    Ok(generate_from_parses(&parses, n, lib, cfg, rng)?
        .into_iter()
        .map(|e| e.image)
        .collect())
}

/// Exemplars for glyph `index` of a class, seeded from the config seed.
pub fn seeded_exemplars(
    img: &GlyphImage,
    index: u64,
    n: usize,
    lib: &PrimitiveLibrary,
    cfg: &GenerationConfig,
) -> Result<Vec<GlyphImage>> {
    generate_exemplars(img, n, lib, cfg, &mut derive_rng(cfg.seed, "glyph", index))
}

/// Tiles equally sized images row-major, `cols` per row, separated by
/// `gap` blank pixels.
pub fn contact_sheet(images: &[GlyphImage], cols: usize, gap: usize) -> Result<GlyphImage> {
    let first = images.first().ok_or(Error::EmptyCorpus)?;
    let (w, h) = (first.width(), first.height());
    let cols = cols.max(1);
    let rows = images.len().div_ceil(cols);
    let mut sheet = GlyphImage::new(cols * w + (cols - 1) * gap, rows * h + (rows - 1) * gap);
    for (i, img) in images.iter().enumerate() {
        let (cx, cy) = (i % cols, i / cols);
        sheet.blit_max(img, (cx * (w + gap)) as isize, (cy * (h + gap)) as isize);
    }
    Ok(sheet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::parser::{Parse, Stroke};
    use crate::rng::rng_from_seed;
    use crate::stroke_model::{sample_program, tests::toy_library, Relation};

    fn toy_parse(lib: &PrimitiveLibrary, seed: u64, weight: f64) -> Parse {
        let mut program = sample_program(lib, &mut rng_from_seed(seed));
        program.parts.truncate(1);
        program.relations = vec![Relation::Independent {
            position: Point::new(40.0, 50.0),
        }];
        Parse {
            strokes: vec![Stroke {
                steps: Vec::new(),
                points: Vec::new(),
            }],
            program,
            log_prob: weight.ln(),
            weight,
        }
    }

    fn two_parse_set(lib: &PrimitiveLibrary) -> ParseSet {
        ParseSet {
            parses: vec![toy_parse(lib, 1, 0.8), toy_parse(lib, 2, 0.2)],
            source: "test".into(),
        }
    }

    #[test]
    fn parse_selection_follows_the_weights() {
        let mut rng = rng_from_seed(11);
        let hits = (0..10_000)
            .filter(|_| select_parse(&[0.8, 0.2], &mut rng) == 0)
            .count();
        let f = hits as f64 / 10_000.0;
        // binomial sd at p = 0.8 is 0.004
        assert!((f - 0.8).abs() <= 0.01, "{f}");
    }

    #[test]
    fn mixture_draws_pick_parses_by_weight() {
        let lib = toy_library(3);
        let cfg = GenerationConfig {
            k: 2,
            fast_mode: true,
            ink: InkModel {
                pen_width: 1.0,
                ..InkModel::default()
            },
            ..GenerationConfig::default().with_preset(Preset::Zero)
        };
        let out = generate_from_parses(
            &two_parse_set(&lib),
            10_000,
            &lib,
            &cfg,
            &mut rng_from_seed(3),
        )
        .unwrap();
        let f = out.iter().filter(|e| e.parse_index == 0).count() as f64 / out.len() as f64;
        assert!((f - 0.8).abs() <= 0.01, "{f}");
    }

    #[test]
    fn zero_noise_single_parse_is_the_map_render() {
        let lib = toy_library(3);
        let cfg = GenerationConfig::fast().with_preset(Preset::Zero);
        let set = two_parse_set(&lib);
        let out = generate_from_parses(&set, 5, &lib, &cfg, &mut rng_from_seed(8)).unwrap();
        let program = &set.parses[0].program;
        let want = render(
            program,
            &TokenParams::identity(program, 10),
            &lib,
            &cfg.ink,
            105,
            105,
        )
        .unwrap()
        .map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
        assert!(out.iter().all(|e| e.image == want && e.parse_index == 0));
    }

    #[test]
    fn default_noise_varies_and_is_deterministic() {
        let lib = toy_library(3);
        let cfg = GenerationConfig::fast();
        let set = two_parse_set(&lib);
        let a = generate_from_parses(&set, 10, &lib, &cfg, &mut rng_from_seed(8)).unwrap();
        let b = generate_from_parses(&set, 10, &lib, &cfg, &mut rng_from_seed(8)).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert_ne!(a[i].image, a[j].image);
            }
        }
    }

    #[test]
    fn zero_requests_give_nothing() {
        let lib = toy_library(3);
        let img = GlyphImage::new(105, 105);
        // an empty glyph is only an error once something is requested
        assert!(generate_exemplars(
            &img,
            0,
            &lib,
            &GenerationConfig::default(),
            &mut rng_from_seed(0)
        )
        .unwrap()
        .is_empty());
        let err = generate_exemplars(
            &img,
            1,
            &lib,
            &GenerationConfig::default(),
            &mut rng_from_seed(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyGlyph));
    }

    #[test]
    fn config_validation() {
        assert!(GenerationConfig::default().validate().is_ok());
        let bad = [
            GenerationConfig {
                k: 0,
                ..GenerationConfig::default()
            },
            GenerationConfig {
                n: 0,
                ..GenerationConfig::default()
            },
            GenerationConfig {
                ink: InkModel {
                    ink_noise: 1.0,
                    ..InkModel::default()
                },
                ..GenerationConfig::default()
            },
            GenerationConfig {
                ink: InkModel {
                    pen_width: 0.0,
                    ..InkModel::default()
                },
                ..GenerationConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        }
        assert!(Preset::parse("loud").is_err());
        assert_eq!(Preset::parse("wild").unwrap(), Preset::Wild);
    }

    #[test]
    fn contact_sheet_layout() {
        let mut tile = GlyphImage::new(4, 3);
        tile.set(0, 0, 1.0);
        let sheet = contact_sheet(&vec![tile; 9], 3, 2).unwrap();
        assert_eq!((sheet.width(), sheet.height()), (16, 13));
        assert_eq!(sheet.ink_count(), 9);
        assert!(sheet.is_ink(12, 10));
    }
}
