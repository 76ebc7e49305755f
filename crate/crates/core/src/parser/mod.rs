//! Image to ranked stroke programs: binarize, thin, extract the skeleton
//! graph, enumerate parses by random walks and convert them to programs.

mod binarize;
mod convert;
pub mod debug;
mod graph;
mod thin;
mod walk;

use serde::{Deserialize, Serialize};

pub use binarize::{binarize, otsu_threshold};
pub use convert::{
    infer_relations, parse_to_program, split_at_corners, stroke_to_part, ConvertConfig,
};
pub use graph::{Edge, GraphConfig, Node, NodeKind, Pixel, SkeletonGraph};
pub use thin::thin;
pub use walk::{parse_weights, random_walk_parses, EdgeStep, Parse, ParseSet, Stroke, WalkConfig};

use crate::error::Result;
use crate::image::GlyphImage;
use crate::rng::Rng;
use crate::stroke_model::PrimitiveLibrary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParserConfig {
    /// Fixed ink threshold; Otsu's method when absent.
    pub threshold: Option<f32>,
    /// Side of the square working canvas glyphs are resized to.
    pub canvas: usize,
    /// Blank border kept when a glyph is resized onto the canvas.
    pub margin: usize,
    pub graph: GraphConfig,
    pub walk: WalkConfig,
    pub convert: ConvertConfig,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig {
            threshold: None,
            canvas: 105,
            margin: 10,
            graph: GraphConfig::default(),
            walk: WalkConfig::default(),
            convert: ConvertConfig::default(),
        }
    }
}

/// Binarized working-canvas image and its skeleton graph.
pub fn skeletonize(img: &GlyphImage, cfg: &ParserConfig) -> Result<(GlyphImage, SkeletonGraph)> {
    let binary = binarize(&img.fit_to_canvas(cfg.canvas, cfg.margin), cfg.threshold);
    let graph = SkeletonGraph::from_skeleton(&thin(&binary), &cfg.graph)?;
    Ok((binary, graph))
}

/// Full inference for one glyph: ranked parses of its skeleton.
pub fn parse_glyph(
    img: &GlyphImage,
    lib: &PrimitiveLibrary,
    cfg: &ParserConfig,
    rng: &mut Rng,
) -> Result<ParseSet> {
    let (_, graph) = skeletonize(img, cfg)?;
    Ok(random_walk_parses(
        &graph,
        lib,
        &cfg.walk,
        &cfg.convert,
        rng,
    ))
}
