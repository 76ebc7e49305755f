//! One-shot glyph generation from stroke programs, synthetic text-line
//! composition and symbol-error-rate evaluation for low-resource scripts.

pub mod augment;
pub mod compose;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod generator;
pub mod geometry;
pub mod image;
pub mod parser;
pub mod procedural;
pub mod rng;
pub mod stroke_model;

pub use error::{Error, ErrorKind, Result};
pub use geometry::Point;
pub use image::{BBox, GlyphImage};
