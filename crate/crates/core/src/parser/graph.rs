use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::image::GlyphImage;

pub type Pixel = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Endpoint,
    Junction,
    /// Anchor placed on a closed curve that has no endpoints or junctions.
    Loop,
    /// A lone skeleton pixel.
    Dot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub pixels: Vec<Pixel>,
    /// Centroid of the node's pixels.
    pub position: Point,
}

/// A simple pixel chain between two nodes. `pixels` runs from a pixel of
/// `from` to a pixel of `to`, both included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub pixels: Vec<Pixel>,
}

impl Edge {
    /// Pixel centres of the chain, with the end pixels replaced by their
    /// node positions so strokes meeting at a junction share a point.
    pub fn path(&self, nodes: &[Node]) -> Vec<Point> {
        let mut pts: Vec<Point> = self
            .pixels
            .iter()
            .map(|&(x, y)| Point::new(x as f64, y as f64))
            .collect();
        if pts.len() >= 2 {
            pts[0] = nodes[self.from].position;
            *pts.last_mut().unwrap() = nodes[self.to].position;
        }
        pts
    }

    pub fn interior(&self) -> &[Pixel] {
        if self.pixels.len() <= 2 {
            &[]
        } else {
            &self.pixels[1..self.pixels.len() - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonGraph {
    pub width: usize,
    pub height: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Edges from a junction to a free end with at most this many pixels are
    /// pruned as thinning artefacts.
    pub max_spur: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { max_spur: 4 }
    }
}

const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

struct Raster<'a> {
    img: &'a GlyphImage,
}

impl Raster<'_> {
    fn on(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && self.img.get_signed(x, y) >= 0.5
    }

    fn neighbours(&self, (x, y): Pixel) -> Vec<Pixel> {
        RING.iter()
            .map(|&(dx, dy)| (x as isize + dx, y as isize + dy))
            .filter(|&(nx, ny)| self.on(nx, ny))
            .map(|(nx, ny)| (nx as usize, ny as usize))
            .collect()
    }
}

impl SkeletonGraph {
    /// Extracts the graph of a thinned image: pixels with one neighbour are
    /// endpoints, pixels with three or more are junctions (touching junction
    /// pixels form one node), and chains of two-neighbour pixels are edges.
    pub fn from_skeleton(skeleton: &GlyphImage, config: &GraphConfig) -> Result<SkeletonGraph> {
        let raster = Raster { img: skeleton };
        let (w, h) = (skeleton.width(), skeleton.height());
        let pixels: Vec<Pixel> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| skeleton.is_ink(x, y))
            .collect();
        if pixels.is_empty() {
            return Err(Error::EmptyGlyph);
        }
        let degree: HashMap<Pixel, usize> = pixels
            .iter()
            .map(|&p| (p, raster.neighbours(p).len()))
            .collect();

        // cluster node pixels
        let mut node_of: HashMap<Pixel, usize> = HashMap::new();
        let mut nodes: Vec<Node> = Vec::new();
        for &p in &pixels {
            if degree[&p] == 2 || node_of.contains_key(&p) {
                continue;
            }
            let id = nodes.len();
            let mut members = vec![p];
            node_of.insert(p, id);
            let mut i = 0;
            while i < members.len() {
                for q in raster.neighbours(members[i]) {
                    if degree[&q] != 2 && !node_of.contains_key(&q) {
                        node_of.insert(q, id);
                        members.push(q);
                    }
                }
                i += 1;
            }
            let max_degree = members.iter().map(|q| degree[q]).max().unwrap_or(0);
            let kind = match (members.len(), max_degree) {
                (1, 1) => NodeKind::Endpoint,
                (_, 0..=1) => NodeKind::Dot,
                _ => NodeKind::Junction,
            };
            nodes.push(Node {
                kind,
                pixels: members,
                position: Point::ORIGIN,
            });
        }
        // chain pixels wedged between two pixels of one node belong to it
        for &p in &pixels {
            if degree[&p] != 2 || node_of.contains_key(&p) {
                continue;
            }
            let nb = raster.neighbours(p);
            if let (Some(&a), Some(&b)) = (node_of.get(&nb[0]), node_of.get(&nb[1])) {
                if a == b {
                    node_of.insert(p, a);
                    nodes[a].pixels.push(p);
                }
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut visited: HashSet<Pixel> = HashSet::new();
        for id in 0..nodes.len() {
            if nodes[id].kind == NodeKind::Dot {
                edges.push(Edge {
                    from: id,
                    to: id,
                    pixels: nodes[id].pixels.clone(),
                });
                continue;
            }
            let mut members = nodes[id].pixels.clone();
            members.sort_unstable_by_key(|&(x, y)| (y, x));
            for p in members {
                for q in raster.neighbours(p) {
                    if node_of.contains_key(&q) || visited.contains(&q) {
                        continue;
                    }
                    let chain = trace(&raster, &node_of, p, q, &mut visited);
                    let to = node_of.get(chain.last().unwrap()).copied().unwrap_or(id);
                    edges.push(Edge {
                        from: id,
                        to,
                        pixels: chain,
                    });
                }
            }
        }
        // closed curves without nodes
        for &p in &pixels {
            if node_of.contains_key(&p) || visited.contains(&p) {
                continue;
            }
            let id = nodes.len();
            node_of.insert(p, id);
            nodes.push(Node {
                kind: NodeKind::Loop,
                pixels: vec![p],
                position: Point::ORIGIN,
            });
            let first = raster.neighbours(p)[0];
            let chain = trace(&raster, &node_of, p, first, &mut visited);
            edges.push(Edge {
                from: id,
                to: id,
                pixels: chain,
            });
        }

        let mut graph = SkeletonGraph {
            width: w,
            height: h,
            nodes,
            edges,
            pixel_count: pixels.len(),
        };
        graph.prune_spurs(config.max_spur);
        for node in &mut graph.nodes {
            let n = node.pixels.len() as f64;
            let (sx, sy) = node
                .pixels
                .iter()
                .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
            node.position = Point::new(sx / n, sy / n);
        }
        Ok(graph)
    }

    /// Number of edge ends at each node (a self-loop counts twice).
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.from] += 1;
            d[e.to] += 1;
        }
        d
    }

    /// Every pixel of the graph, node pixels included.
    pub fn pixel_set(&self) -> std::collections::BTreeSet<Pixel> {
        self.nodes
            .iter()
            .flat_map(|n| n.pixels.iter().copied())
            .chain(self.edges.iter().flat_map(|e| e.pixels.iter().copied()))
            .collect()
    }

    /// Removes short edges that join a junction to a free end, then drops
    /// nodes left without edges and renumbers.
    fn prune_spurs(&mut self, max_spur: usize) {
        if self.edges.len() < 2 {
            return;
        }
        let degrees = self.degrees();
        let is_end = |n: usize| self.nodes[n].kind == NodeKind::Endpoint && degrees[n] == 1;
        let is_hub = |n: usize| degrees[n] >= 3;
        let doomed: Vec<bool> = self
            .edges
            .iter()
            .map(|e| {
                e.pixels.len() <= max_spur
                    && ((is_end(e.from) && is_hub(e.to)) || (is_end(e.to) && is_hub(e.from)))
            })
            .collect();
        if !doomed.iter().any(|&d| d) {
            return;
        }
        // never strip every branch of a hub
        let mut remaining = degrees.clone();
        let mut keep = vec![true; self.edges.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if !doomed[i] {
                continue;
            }
            let hub = if is_hub(e.to) { e.to } else { e.from };
            if remaining[hub] > 2 {
                remaining[hub] -= 1;
                keep[i] = false;
            }
        }
        let mut removed = 0;
        let mut edges = Vec::new();
        let mut used = vec![false; self.nodes.len()];
        for (e, k) in std::mem::take(&mut self.edges).into_iter().zip(keep) {
            if k {
                used[e.from] = true;
                used[e.to] = true;
                edges.push(e);
            } else {
                removed += e.interior().len();
                let free = if is_end(e.from) { e.from } else { e.to };
                removed += self.nodes[free].pixels.len();
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in std::mem::take(&mut self.nodes).into_iter().enumerate() {
            if used[i] {
                remap[i] = nodes.len();
                nodes.push(n);
            }
        }
        for e in &mut edges {
            e.from = remap[e.from];
            e.to = remap[e.to];
        }
        self.nodes = nodes;
        self.edges = edges;
        self.pixel_count -= removed;
        let d = self.degrees();
        for (n, &deg) in self.nodes.iter_mut().zip(&d) {
            if n.kind == NodeKind::Junction && deg == 1 {
                n.kind = NodeKind::Endpoint;
            }
        }
    }
}

/// Follows the chain that leaves node pixel `start` through `first` until
/// it reaches a node pixel; returns the chain including both ends.
fn trace(
    raster: &Raster,
    node_of: &HashMap<Pixel, usize>,
    start: Pixel,
    first: Pixel,
    visited: &mut HashSet<Pixel>,
) -> Vec<Pixel> {
    let mut chain = vec![start, first];
    visited.insert(first);
    let (mut prev, mut cur) = (start, first);
    while let Some(q) = raster
        .neighbours(cur)
        .into_iter()
        .find(|&q| q != prev && (node_of.contains_key(&q) || !visited.contains(&q)))
    {
        chain.push(q);
        if node_of.contains_key(&q) {
            break;
        }
        visited.insert(q);
        prev = cur;
        cur = q;
    }
    chain
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::thin::thin;

    fn bar_image() -> GlyphImage {
        let mut img = GlyphImage::new(26, 9);
        for y in 3..6 {
            for x in 3..23 {
                img.set(x, y, 1.0);
            }
        }
        img
    }

    pub(crate) fn plus_image() -> GlyphImage {
        let mut img = GlyphImage::new(31, 31);
        for i in 4..27 {
            for t in 14..17 {
                img.set(i, t, 1.0);
                img.set(t, i, 1.0);
            }
        }
        img
    }

    fn counts(g: &SkeletonGraph) -> (usize, usize, usize) {
        let ends = g
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Endpoint)
            .count();
        let junctions = g
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Junction)
            .count();
        (ends, junctions, g.edges.len())
    }

    #[test]
    fn bar_is_one_chain() {
        let g = SkeletonGraph::from_skeleton(&thin(&bar_image()), &GraphConfig::default()).unwrap();
        assert_eq!(counts(&g), (2, 0, 1));
        assert!(g.edges[0].pixels.iter().all(|&(_, y)| y == 4));
    }

    #[test]
    fn plus_has_four_arms() {
        let skeleton = thin(&plus_image());
        // oracle: count pixel degrees on the thinned raster directly
        let ink: Vec<Pixel> = (0..31)
            .flat_map(|y| (0..31).map(move |x| (x, y)))
            .filter(|&(x, y)| skeleton.is_ink(x, y))
            .collect();
        let deg = |(x, y): Pixel| {
            RING.iter()
                .filter(|&&(dx, dy)| skeleton.get_signed(x as isize + dx, y as isize + dy) >= 0.5)
                .count()
        };
        let oracle_ends = ink.iter().filter(|&&p| deg(p) == 1).count();
        assert_eq!(oracle_ends, 4);
        let g = SkeletonGraph::from_skeleton(&skeleton, &GraphConfig::default()).unwrap();
        assert_eq!(counts(&g), (4, 1, 4));
    }

    #[test]
    fn ring_becomes_a_self_loop() {
        let img = GlyphImage::from_ascii(&[".###.", "#...#", "#...#", "#...#", ".###."]);
        let g = SkeletonGraph::from_skeleton(&img, &GraphConfig::default()).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.nodes[0].kind, NodeKind::Loop);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].from, g.edges[0].to);
        assert_eq!(g.edges[0].pixels.len(), 13);
    }

    #[test]
    fn every_pixel_is_a_node_or_exactly_one_interior() {
        let skeleton = thin(&plus_image());
        let g = SkeletonGraph::from_skeleton(&skeleton, &GraphConfig { max_spur: 0 }).unwrap();
        let mut seen: HashMap<Pixel, usize> = HashMap::new();
        for e in &g.edges {
            for &p in e.interior() {
                *seen.entry(p).or_default() += 1;
            }
        }
        let node_pixels: std::collections::HashSet<Pixel> = g
            .nodes
            .iter()
            .flat_map(|n| n.pixels.iter().copied())
            .collect();
        assert!(seen.values().all(|&c| c == 1));
        assert!(seen.keys().all(|p| !node_pixels.contains(p)));
        assert_eq!(seen.len() + node_pixels.len(), skeleton.ink_count());
        assert_eq!(g.pixel_count, skeleton.ink_count());
    }

    #[test]
    fn lone_pixel_is_a_dot_edge() {
        let img = GlyphImage::from_ascii(&["...", ".#.", "..."]);
        let g = SkeletonGraph::from_skeleton(&img, &GraphConfig::default()).unwrap();
        assert_eq!(g.nodes[0].kind, NodeKind::Dot);
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn empty_skeleton_is_an_error() {
        let img = GlyphImage::new(4, 4);
        assert!(matches!(
            SkeletonGraph::from_skeleton(&img, &GraphConfig::default()),
            Err(Error::EmptyGlyph)
        ));
    }
}
