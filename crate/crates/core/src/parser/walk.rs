//! Random-walk parsing of a skeleton graph.
//!
//! Each walk partitions the graph's edges into strokes. A stroke leaves a
//! node through an unused edge and, at each node it reaches, either
//! continues through another unused edge or stops; continuation is biased
//! towards the smoothest turn. The first walk is greedy, later ones are
//! sampled. Distinct partitions are oriented, converted to programs, scored
//! and ranked.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::convert::{
    part_log_prob, program_from_trajectories, stroke_to_part, usable, ConvertConfig,
};
use super::graph::SkeletonGraph;
use crate::geometry::Point;
use crate::rng::Rng;
use crate::stroke_model::{score_program, PrimitiveLibrary, SymbolProgram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Upper bound on returned parses.
    pub k_max: usize,
    /// Walks attempted before giving up on finding `k_max` distinct parses.
    pub budget: usize,
    /// Softness, in radians, of the preference for small turns.
    pub temperature: f64,
    /// Turn, in radians, at which stopping is as likely as continuing.
    pub stop_angle: f64,
    /// Pixels used to estimate an edge's direction at a node.
    pub tangent_span: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            k_max: 10,
            budget: 200,
            temperature: 0.35,
            stop_angle: 1.0,
            tangent_span: 5,
        }
    }
}

/// One traversal of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeStep {
    pub edge: usize,
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub steps: Vec<EdgeStep>,
    /// Pixel trajectory in drawing order.
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parse {
    pub strokes: Vec<Stroke>,
    /// The fast-mode program this parse was scored as.
    pub program: SymbolProgram,
    pub log_prob: f64,
    pub weight: f64,
}

impl Parse {
    /// Ordered edge steps of every stroke, used for deterministic ties.
    pub fn encoding(&self) -> Vec<Vec<EdgeStep>> {
        self.strokes.iter().map(|s| s.steps.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseSet {
    /// Sorted by descending log-probability.
    pub parses: Vec<Parse>,
    pub source: String,
}

impl ParseSet {
    pub fn best(&self) -> &Parse {
        &self.parses[0]
    }
}

fn step_path(graph: &SkeletonGraph, step: EdgeStep) -> Vec<Point> {
    let mut p = graph.edges[step.edge].path(&graph.nodes);
    if step.reversed {
        p.reverse();
    }
    p
}

fn stroke_points(graph: &SkeletonGraph, steps: &[EdgeStep]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for &s in steps {
        let path = step_path(graph, s);
        let skip = usize::from(out.last().is_some_and(|l| path.first() == Some(l)));
        out.extend(path.into_iter().skip(skip));
    }
    out
}

/// Direction of travel leaving the start of `path`.
fn leaving(path: &[Point], span: usize) -> Point {
    let k = span.min(path.len() - 1);
    path[k] - path[0]
}

fn angle_between(a: Point, b: Point) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    if c.is_finite() {
        c.clamp(-1.0, 1.0).acos()
    } else {
        std::f64::consts::PI
    }
}

struct Walker<'a> {
    graph: &'a SkeletonGraph,
    cfg: &'a WalkConfig,
    /// Incident edge steps leaving each node.
    exits: Vec<Vec<EdgeStep>>,
}

impl<'a> Walker<'a> {
    fn new(graph: &'a SkeletonGraph, cfg: &'a WalkConfig) -> Self {
        let mut exits = vec![Vec::new(); graph.nodes.len()];
        for (i, e) in graph.edges.iter().enumerate() {
            exits[e.from].push(EdgeStep {
                edge: i,
                reversed: false,
            });
            if e.to != e.from || e.pixels.len() > 1 {
                exits[e.to].push(EdgeStep {
                    edge: i,
                    reversed: true,
                });
            }
        }
        Walker { graph, cfg, exits }
    }

    fn end_node(&self, s: EdgeStep) -> usize {
        let e = &self.graph.edges[s.edge];
        if s.reversed {
            e.from
        } else {
            e.to
        }
    }

    /// One full edge partition. `rng = None` walks greedily.
    fn walk(&self, mut rng: Option<&mut Rng>) -> Vec<Vec<EdgeStep>> {
        let mut used = vec![false; self.graph.edges.len()];
        let mut left = used.len();
        let mut strokes = Vec::new();
        while left > 0 {
            let free = |n: usize| self.exits[n].iter().filter(|s| !used[s.edge]).count();
            let open: Vec<usize> = (0..self.graph.nodes.len())
                .filter(|&n| free(n) > 0)
                .collect();
            let odd: Vec<usize> = open.iter().copied().filter(|&n| free(n) % 2 == 1).collect();
            let pool = if odd.is_empty() { &open } else { &odd };
            let start = match rng.as_deref_mut() {
                None => *pool
                    .iter()
                    .min_by(|&&a, &&b| {
                        let (pa, pb) = (self.graph.nodes[a].position, self.graph.nodes[b].position);
                        (pa.x + pa.y)
                            .total_cmp(&(pb.x + pb.y))
                            .then(pa.y.total_cmp(&pb.y))
                            .then(a.cmp(&b))
                    })
                    .unwrap(),
                Some(r) => {
                    let pool = if r.random::<f64>() < 0.9 { pool } else { &open };
                    pool[r.random_range(0..pool.len())]
                }
            };
            let choices: Vec<EdgeStep> = self.exits[start]
                .iter()
                .copied()
                .filter(|s| !used[s.edge])
                .collect();
            let mut step = match rng.as_deref_mut() {
                None => choices[0],
                Some(r) => choices[r.random_range(0..choices.len())],
            };
            let mut stroke = Vec::new();
            loop {
                used[step.edge] = true;
                left -= 1;
                stroke.push(step);
                let node = self.end_node(step);
                let path = step_path(self.graph, step);
                let mut back = path.clone();
                back.reverse();
                let heading = leaving(&back, self.cfg.tangent_span) * -1.0;
                let options: Vec<(EdgeStep, f64)> = self.exits[node]
                    .iter()
                    .filter(|s| !used[s.edge])
                    .map(|&s| {
                        (
                            s,
                            angle_between(
                                heading,
                                leaving(&step_path(self.graph, s), self.cfg.tangent_span),
                            ),
                        )
                    })
                    .collect();
                if options.is_empty() {
                    break;
                }
                let next = match rng.as_deref_mut() {
                    None => options
                        .iter()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .filter(|o| o.1 <= self.cfg.stop_angle)
                        .map(|o| o.0),
                    Some(r) => {
                        let t = self.cfg.temperature;
                        let weights: Vec<f64> = options.iter().map(|o| (-o.1 / t).exp()).collect();
                        let stop = (-self.cfg.stop_angle / t).exp();
                        let mut u = r.random::<f64>() * (weights.iter().sum::<f64>() + stop);
                        let mut pick = None;
                        for (o, w) in options.iter().zip(&weights) {
                            if u < *w {
                                pick = Some(o.0);
                                break;
                            }
                            u -= w;
                        }
                        pick
                    }
                };
                match next {
                    Some(s) => step = s,
                    None => break,
                }
            }
            strokes.push(stroke);
        }
        strokes
    }
}

/// Canonical undirected form of a partition: each stroke as the smaller of
/// its edge sequence and the reverse, strokes sorted.
fn canonical(strokes: &[Vec<EdgeStep>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = strokes
        .iter()
        .map(|s| {
            let fwd: Vec<usize> = s.iter().map(|e| e.edge).collect();
            let mut rev = fwd.clone();
            rev.reverse();
            fwd.min(rev)
        })
        .collect();
    out.sort();
    out
}

fn reverse_steps(steps: &[EdgeStep]) -> Vec<EdgeStep> {
    steps
        .iter()
        .rev()
        .map(|s| EdgeStep {
            edge: s.edge,
            reversed: !s.reversed,
        })
        .collect()
}

/// Orients every stroke in its more probable drawing direction, orders the
/// strokes by their top-left-most point and scores the resulting program.
pub(crate) fn build_parse(
    graph: &SkeletonGraph,
    partition: &[Vec<EdgeStep>],
    lib: &PrimitiveLibrary,
    convert: &ConvertConfig,
) -> Parse {
    let mut strokes: Vec<Stroke> = partition
        .iter()
        .map(|steps| {
            let fwd = steps.clone();
            let rev = reverse_steps(steps);
            let score = |s: &[EdgeStep]| {
                let pts = usable(&stroke_points(graph, s));
                let part = stroke_to_part(&pts, lib, convert, true);
                (part_log_prob(&part, lib), pts)
            };
            let (lf, pf) = score(&fwd);
            let (lr, pr) = score(&rev);
            // ties go to the direction starting nearer the top left
            let forward = if lf != lr {
                lf > lr
            } else {
                let (a, b) = (pf[0], pr[0]);
                (a.x + a.y, a.y) <= (b.x + b.y, b.y)
            };
            if forward {
                Stroke {
                    steps: fwd,
                    points: pf,
                }
            } else {
                Stroke {
                    steps: rev,
                    points: pr,
                }
            }
        })
        .collect();
    let key = |s: &Stroke| {
        s.points
            .iter()
            .map(|p| (p.x + p.y, p.y))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
            .unwrap()
    };
    strokes.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(a.steps.cmp(&b.steps))
    });
    // only partitions that cannot fit reach here; the longest strokes are kept
    if strokes.len() > lib.config.kappa_max {
        let mut order: Vec<usize> = (0..strokes.len()).collect();
        order.sort_by(|&a, &b| {
            crate::geometry::arc_length(&strokes[b].points)
                .total_cmp(&crate::geometry::arc_length(&strokes[a].points))
                .then(a.cmp(&b))
        });
        let keep: BTreeSet<usize> = order[..lib.config.kappa_max].iter().copied().collect();
        strokes = strokes
            .into_iter()
            .enumerate()
            .filter(|(i, _)| keep.contains(i))
            .map(|(_, s)| s)
            .collect();
    }
    let trajectories: Vec<Vec<Point>> = strokes.iter().map(|s| s.points.clone()).collect();
    let program = program_from_trajectories(&trajectories, lib, convert, true);
    let log_prob = score_program(&program, lib).unwrap_or(f64::NEG_INFINITY);
    Parse {
        strokes,
        program,
        log_prob,
        weight: 0.0,
    }
}

/// Softmax of log-probabilities; uniform when none is finite.
pub fn parse_weights(log_probs: &[f64]) -> Vec<f64> {
    let m = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return vec![1.0 / log_probs.len() as f64; log_probs.len()];
    }
    let e: Vec<f64> = log_probs.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Collects up to `k_max` distinct edge partitions by random walks, scores
/// each through its fast-mode program conversion and returns them ranked.
pub fn random_walk_parses(
    graph: &SkeletonGraph,
    lib: &PrimitiveLibrary,
    cfg: &WalkConfig,
    convert: &ConvertConfig,
    rng: &mut Rng,
) -> ParseSet {
    let walker = Walker::new(graph, cfg);
    let mut seen: BTreeSet<Vec<Vec<usize>>> = BTreeSet::new();
    let mut partitions = Vec::new();
    // more strokes than a program can hold has zero prior mass; such
    // partitions are used, truncated, only when nothing else turns up
    let mut oversized = Vec::new();
    for i in 0..cfg.budget.max(1) {
        if partitions.len() >= cfg.k_max.max(1) {
            break;
        }
        let p = if i == 0 {
            walker.walk(None)
        } else {
            walker.walk(Some(rng))
        };
        if seen.insert(canonical(&p)) {
            if p.len() > lib.config.kappa_max {
                oversized.push(p);
            } else {
                partitions.push(p);
            }
        }
    }
    if partitions.is_empty() {
        partitions = oversized;
        partitions.truncate(cfg.k_max.max(1));
    }
    let mut parses: Vec<Parse> = partitions
        .iter()
        .map(|p| build_parse(graph, p, lib, convert))
        .collect();
    parses.sort_by(|a, b| {
        b.log_prob
            .total_cmp(&a.log_prob)
            .then_with(|| a.encoding().cmp(&b.encoding()))
    });
    let weights = parse_weights(&parses.iter().map(|p| p.log_prob).collect::<Vec<_>>());
    for (p, w) in parses.iter_mut().zip(weights) {
        p.weight = w;
    }
    ParseSet {
        parses,
        source: String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GlyphImage;
    use crate::parser::{thin, GraphConfig};
    use crate::rng::rng_from_seed;
    use crate::stroke_model::tests::toy_library;

    fn graph_of(img: &GlyphImage) -> SkeletonGraph {
        SkeletonGraph::from_skeleton(&thin(img), &GraphConfig::default()).unwrap()
    }

    fn plus() -> GlyphImage {
        let mut img = GlyphImage::new(41, 41);
        for i in 5..36 {
            for t in 19..22 {
                img.set(i, t, 1.0);
                img.set(t, i, 1.0);
            }
        }
        img
    }

    /// All ways to split the four arms of a star into paths through its
    /// centre: every block holds one arm or two.
    fn star_partitions(edges: &[usize]) -> BTreeSet<Vec<Vec<usize>>> {
        fn rec(rest: &[usize], acc: &mut Vec<Vec<usize>>, out: &mut BTreeSet<Vec<Vec<usize>>>) {
            let Some((&first, tail)) = rest.split_first() else {
                let mut c: Vec<Vec<usize>> = acc
                    .iter()
                    .map(|b| {
                        let mut b = b.clone();
                        b.sort_unstable();
                        b
                    })
                    .collect();
                c.sort();
                out.insert(c);
                return;
            };
            acc.push(vec![first]);
            rec(tail, acc, out);
            acc.pop();
            for (i, &other) in tail.iter().enumerate() {
                let mut remaining = tail.to_vec();
                remaining.remove(i);
                acc.push(vec![first, other]);
                rec(&remaining, acc, out);
                acc.pop();
            }
        }
        let mut out = BTreeSet::new();
        rec(edges, &mut Vec::new(), &mut out);
        out
    }

    fn undirected(p: &Parse) -> Vec<Vec<usize>> {
        let mut c: Vec<Vec<usize>> = p
            .strokes
            .iter()
            .map(|s| {
                let mut e: Vec<usize> = s.steps.iter().map(|s| s.edge).collect();
                e.sort_unstable();
                e
            })
            .collect();
        c.sort();
        c
    }

    fn check_contract(set: &ParseSet, g: &SkeletonGraph, k_max: usize) {
        assert!(!set.parses.is_empty() && set.parses.len() <= k_max);
        let total: f64 = set.parses.iter().map(|p| p.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for p in &set.parses {
            let mut used: Vec<usize> = p
                .strokes
                .iter()
                .flat_map(|s| s.steps.iter().map(|e| e.edge))
                .collect();
            used.sort_unstable();
            assert_eq!(
                used,
                (0..g.edges.len()).collect::<Vec<_>>(),
                "edges not partitioned"
            );
        }
        for w in set.parses.windows(2) {
            let order = w[1]
                .log_prob
                .total_cmp(&w[0].log_prob)
                .then_with(|| w[0].encoding().cmp(&w[1].encoding()));
            assert_eq!(order, std::cmp::Ordering::Less, "not strictly sorted");
        }
    }

    #[test]
    fn straight_chain_has_a_single_parse() {
        let mut img = GlyphImage::new(40, 20);
        for x in 5..35 {
            for y in 9..12 {
                img.set(x, y, 1.0);
            }
        }
        let g = graph_of(&img);
        let lib = toy_library(4);
        let set = random_walk_parses(
            &g,
            &lib,
            &WalkConfig::default(),
            &ConvertConfig::default(),
            &mut rng_from_seed(1),
        );
        assert_eq!(set.parses.len(), 1);
        assert_eq!(set.parses[0].weight, 1.0);
        check_contract(&set, &g, 10);
    }

    #[test]
    fn plus_yields_several_valid_partitions() {
        let g = graph_of(&plus());
        assert_eq!(g.edges.len(), 4);
        let oracle = star_partitions(&[0, 1, 2, 3]);
        assert_eq!(oracle.len(), 10);
        let lib = toy_library(8);
        let set = random_walk_parses(
            &g,
            &lib,
            &WalkConfig::default(),
            &ConvertConfig::default(),
            &mut rng_from_seed(5),
        );
        check_contract(&set, &g, 10);
        assert!(set.parses.len() >= 5, "only {} parses", set.parses.len());
        let found: BTreeSet<_> = set.parses.iter().map(undirected).collect();
        assert_eq!(found.len(), set.parses.len());
        assert!(found.is_subset(&oracle));
        // greedy continuation through the junction gives two crossing strokes
        assert!(found.iter().any(|p| p.len() == 2));
        assert!(found.iter().any(|p| p.len() == 4));
    }

    #[test]
    fn parsing_is_deterministic() {
        let g = graph_of(&plus());
        let lib = toy_library(8);
        let run = |seed| {
            random_walk_parses(
                &g,
                &lib,
                &WalkConfig::default(),
                &ConvertConfig::default(),
                &mut rng_from_seed(seed),
            )
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn weights_are_a_softmax() {
        let w = parse_weights(&[0.0, (0.25f64).ln()]);
        assert!((w[0] - 0.8).abs() < 1e-12 && (w[1] - 0.2).abs() < 1e-12);
        assert_eq!(parse_weights(&[f64::NEG_INFINITY; 4]), vec![0.25; 4]);
    }
}
