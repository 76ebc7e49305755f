//! Fitting a complete library from held-out stroke data where the sub-stroke
//! segmentation and relations are known (online data).

use serde::{Deserialize, Serialize};

use super::library::{fit_count_models, fit_primitive_library, LibraryConfig, PrimitiveLibrary};
use super::program::{Part, Relation, SymbolProgram};
use super::substroke::{normalize_substroke, SubStroke};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// A drawn glyph with known structure: parts → sub-strokes → points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineGlyph {
    pub parts: Vec<Vec<Vec<Point>>>,
    pub relations: Vec<Relation>,
}

impl OnlineGlyph {
    /// Each part as one polyline, consecutive sub-strokes sharing endpoints.
    pub fn part_polylines(&self) -> Vec<Vec<Point>> {
        self.parts
            .iter()
            .map(|subs| {
                let mut line: Vec<Point> = Vec::new();
                for s in subs {
                    let skip = usize::from(line.last().is_some_and(|l| s.first() == Some(l)));
                    line.extend(s.iter().skip(skip));
                }
                line
            })
            .collect()
    }
}

/// Fits primitives on every sub-stroke of the corpus, converts each glyph
/// into a program under those primitives, then fits counts and transitions.
pub fn fit_library_from_corpus(
    corpus: &[OnlineGlyph],
    config: &LibraryConfig,
    seed: u64,
) -> Result<PrimitiveLibrary> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("empty stroke corpus".into()));
    }
    let normalized: Vec<Vec<Vec<SubStroke>>> = corpus
        .iter()
        .map(|g| {
            g.parts
                .iter()
                .map(|subs| {
                    subs.iter()
                        .map(|s| normalize_substroke(s, config.resample))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<SubStroke> = normalized.iter().flatten().flatten().cloned().collect();
    let lib = fit_primitive_library(&flat, config.num_primitives, config, seed)?;

    let programs: Vec<SymbolProgram> = normalized
        .iter()
        .zip(corpus)
        .map(|(parts, glyph)| SymbolProgram {
            parts: parts
                .iter()
                .map(|subs| {
                    let mut part = Part {
                        primitives: Vec::new(),
                        offsets: Vec::new(),
                        scales: Vec::new(),
                    };
                    for s in subs {
                        let (idx, offset) = lib.classify(s);
                        part.primitives.push(idx);
                        part.offsets.push(offset);
                        part.scales.push(s.extent);
                    }
                    part
                })
                .collect(),
            relations: glyph.relations.clone(),
        })
        .collect();
    let (counts, transitions) = fit_count_models(&programs, &lib)?;
    Ok(lib.with_models(counts, transitions))
}
