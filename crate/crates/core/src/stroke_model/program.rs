use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::library::PrimitiveLibrary;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::rng::Rng;

/// How a part attaches to the parts drawn before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Relation {
    /// Free placement; `position` is the start point on the canvas.
    Independent {
        position: Point,
    },
    AtStart {
        target: usize,
    },
    AtEnd {
        target: usize,
    },
    /// Starts at arc-length fraction `tau` of the target part.
    Along {
        target: usize,
        tau: f64,
    },
}

pub const RELATION_KINDS: usize = 4;

impl Relation {
    pub fn target(&self) -> Option<usize> {
        match *self {
            Relation::Independent { .. } => None,
            Relation::AtStart { target } | Relation::AtEnd { target } => Some(target),
            Relation::Along { target, .. } => Some(target),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Relation::Independent { .. } => "independent",
            Relation::AtStart { .. } => "at_start",
            Relation::AtEnd { .. } => "at_end",
            Relation::Along { .. } => "along",
        }
    }

    /// Log-probability (density for continuous parameters) of this relation
    /// for part `index`, given the library's position prior.
    pub fn log_prob(&self, index: usize, lib: &PrimitiveLibrary) -> f64 {
        // part 0 can only be independent, so its kind carries no mass
        let kind = if index == 0 {
            0.0
        } else {
            -(RELATION_KINDS as f64).ln()
        };
        let target = if index == 0 {
            0.0
        } else {
            -(index as f64).ln()
        };
        kind + match *self {
            Relation::Independent { position } => lib.config.position_prior.log_density(position),
            Relation::AtStart { .. } | Relation::AtEnd { .. } => target,
            // tau is uniform on [0, 1]
            Relation::Along { .. } => target,
        }
    }
}

/// One pen stroke: a sequence of primitive-indexed sub-parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub primitives: Vec<usize>,
    /// Flattened trajectory offsets from each primitive's mean shape.
    pub offsets: Vec<Vec<f64>>,
    /// Canvas extent of each sub-part (the normalisation divisor).
    pub scales: Vec<f64>,
}

impl Part {
    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Normalised shape of sub-part `j`: primitive mean plus offset.
    pub fn shape(&self, j: usize, lib: &PrimitiveLibrary) -> Vec<Point> {
        let prim = &lib.primitives[self.primitives[j]];
        prim.mean_trajectory
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let o = &self.offsets[j];
                Point::new(p.x + o[2 * i], p.y + o[2 * i + 1])
            })
            .collect()
    }
}

/// A compositional stroke program: parts plus one relation per part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolProgram {
    pub parts: Vec<Part>,
    pub relations: Vec<Relation>,
}

impl SymbolProgram {
    pub fn kappa(&self) -> usize {
        self.parts.len()
    }

    /// Sorted multiset of every sub-part primitive index.
    pub fn primitive_multiset(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .parts
            .iter()
            .flat_map(|p| p.primitives.clone())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn validate(&self, lib: &PrimitiveLibrary) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProgram(m));
        let cfg = &lib.config;
        if self.parts.is_empty() || self.parts.len() > cfg.kappa_max {
            return bad(format!(
                "{} parts outside 1..={}",
                self.parts.len(),
                cfg.kappa_max
            ));
        }
        if self.relations.len() != self.parts.len() {
            return bad("one relation per part is required".into());
        }
        let dim = 2 * cfg.resample;
        for (i, (part, rel)) in self.parts.iter().zip(&self.relations).enumerate() {
            let n = part.primitives.len();
            if n == 0 || n > cfg.n_max {
                return bad(format!(
                    "part {i} has {n} sub-parts outside 1..={}",
                    cfg.n_max
                ));
            }
            if part.offsets.len() != n || part.scales.len() != n {
                return bad(format!("part {i} has mismatched sub-part fields"));
            }
            if let Some(&p) = part.primitives.iter().find(|&&p| p >= lib.primitives.len()) {
                return bad(format!("part {i} references primitive {p}"));
            }
            if part.offsets.iter().any(|o| o.len() != dim) {
                return bad(format!("part {i} has offsets of the wrong dimension"));
            }
            if part.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return bad(format!("part {i} has a non-positive scale"));
            }
            match *rel {
                Relation::Independent { position } => {
                    if !(position.x.is_finite() && position.y.is_finite()) {
                        return bad(format!("part {i} has a non-finite position"));
                    }
                }
                _ if i == 0 => return bad("part 0 must be independent".into()),
                Relation::AtStart { target } | Relation::AtEnd { target } if target >= i => {
                    return bad(format!("part {i} attaches to later part {target}"));
                }
                Relation::Along { target, tau } => {
                    if target >= i {
                        return bad(format!("part {i} attaches to later part {target}"));
                    }
                    if !(0.0..=1.0).contains(&tau) {
                        return bad(format!("part {i} has tau {tau} outside [0, 1]"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// log P(κ) + Σ_i [log P(S_i) + log P(R_i | S_1..S_{i-1})], where P(S_i)
/// covers the sub-part count, the primitive chain and every sub-part's
/// shape-offset and scale densities.
pub fn score_program(psi: &SymbolProgram, lib: &PrimitiveLibrary) -> Result<f64> {
    psi.validate(lib)?;
    let kappa = psi.kappa();
    let mut lp = lib.count_model.kappa_prob(kappa).ln();
    for (i, (part, rel)) in psi.parts.iter().zip(&psi.relations).enumerate() {
        lp += lib.count_model.n_prob(part.len(), kappa).ln();
        lp += lib.transition_model.sequence_log_prob(&part.primitives);
        for ((&prim, offset), &scale) in part.primitives.iter().zip(&part.offsets).zip(&part.scales)
        {
            let p = &lib.primitives[prim];
            lp += p.offset_log_density(offset) + p.scale_log_density(scale);
        }
        lp += rel.log_prob(i, lib);
    }
    Ok(lp)
}

fn categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let mut u = rng.random::<f64>() * probs.iter().sum::<f64>();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Draws a new type from the library's generative model.
pub fn sample_program(lib: &PrimitiveLibrary, rng: &mut Rng) -> SymbolProgram {
    let kappa = categorical(&lib.count_model.p_kappa, rng) + 1;
    let dim = 2 * lib.config.resample;
    let mut parts = Vec::with_capacity(kappa);
    let mut relations = Vec::with_capacity(kappa);
    for i in 0..kappa {
        let n = categorical(&lib.count_model.p_n_given_kappa[kappa - 1], rng) + 1;
        let mut primitives = Vec::with_capacity(n);
        primitives.push(categorical(&lib.transition_model.initial, rng));
        while primitives.len() < n {
            let prev = *primitives.last().unwrap();
            primitives.push(categorical(&lib.transition_model.rows[prev], rng));
        }
        let mut offsets = Vec::with_capacity(n);
        let mut scales = Vec::with_capacity(n);
        for &prim in &primitives {
            let p = &lib.primitives[prim];
            let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            offsets.push(p.covariance.transform_standard(&z));
            let zs: f64 = StandardNormal.sample(rng);
            scales.push((p.log_scale_mean + p.log_scale_std * zs).exp());
        }
        parts.push(Part {
            primitives,
            offsets,
            scales,
        });
        relations.push(sample_relation(i, lib, rng));
    }
    SymbolProgram { parts, relations }
}

pub(crate) fn sample_relation(index: usize, lib: &PrimitiveLibrary, rng: &mut Rng) -> Relation {
    let kind = if index == 0 {
        0
    } else {
        rng.random_range(0..RELATION_KINDS)
    };
    match kind {
        0 => Relation::Independent {
            position: lib.config.position_prior.sample(rng),
        },
        1 => Relation::AtStart {
            target: rng.random_range(0..index),
        },
        2 => Relation::AtEnd {
            target: rng.random_range(0..index),
        },
        _ => Relation::Along {
            target: rng.random_range(0..index),
            tau: rng.random::<f64>(),
        },
    }
}
