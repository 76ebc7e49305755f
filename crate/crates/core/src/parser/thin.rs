//! One-pixel-wide thinning.
//!
//! Zhang–Suen's two sub-iterations pick deletion candidates; each candidate
//! is then re-checked against the current raster before removal, so a
//! deletion never splits or removes a component. A final pass removes the
//! staircase corners Zhang–Suen keeps and breaks any remaining 2×2 blocks.

use crate::image::{label_components, GlyphImage};

// Neighbour offsets in the order P2..P9: N, NE, E, SE, S, SW, W, NW.
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

struct Grid {
    w: usize,
    h: usize,
    on: Vec<bool>,
}

impl Grid {
    fn at(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.w
            && (y as usize) < self.h
            && self.on[y as usize * self.w + x as usize]
    }

    fn ring(&self, x: usize, y: usize) -> [bool; 8] {
        let (x, y) = (x as isize, y as isize);
        RING.map(|(dx, dy)| self.at(x + dx, y + dy))
    }
}

fn neighbours(r: &[bool; 8]) -> usize {
    r.iter().filter(|&&b| b).count()
}

/// Number of 0→1 transitions around the ring.
fn transitions(r: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !r[i] && r[(i + 1) % 8]).count()
}

/// Yokoi's 8-connectivity number; a border pixel is simple iff it is 1.
fn connectivity(r: &[bool; 8]) -> usize {
    let c = |i: usize| !r[i % 8];
    [2usize, 4, 6, 0]
        .iter()
        .filter(|&&k| {
            // k indexes the 4-neighbours E, S, W, N in RING order
            c(k) && !(c(k + 1) && c(k + 2))
        })
        .count()
}

fn is_simple(r: &[bool; 8]) -> bool {
    connectivity(r) == 1
}

fn zhang_suen_candidate(r: &[bool; 8], first: bool) -> bool {
    let b = neighbours(r);
    if !(2..=6).contains(&b) || transitions(r) != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *r;
    if first {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Thins a binary image to a one-pixel-wide skeleton with the same
/// 8-connected component count.
pub fn thin(binary: &GlyphImage) -> GlyphImage {
    let (w, h) = (binary.width(), binary.height());
    let mut g = Grid {
        w,
        h,
        on: binary.pixels().iter().map(|&v| v >= 0.5).collect(),
    };
    loop {
        let mut changed = false;
        for first in [true, false] {
            let candidates: Vec<(usize, usize)> = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| g.on[y * w + x] && zhang_suen_candidate(&g.ring(x, y), first))
                .collect();
            for (x, y) in candidates {
                // simple points keep the topology; a candidate whose
                // neighbours were removed earlier in this pass may now be a
                // line end, which is simple and goes the way parallel
                // Zhang–Suen would remove it
                if is_simple(&g.ring(x, y)) {
                    g.on[y * w + x] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    strip_corners(&mut g);
    break_blocks(&mut g);
    GlyphImage::from_pixels(
        w,
        h,
        g.on.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )
}

/// Removes simple non-end pixels that do not carry a line: staircase
/// corners and the spare pixels of thick junctions.
fn strip_corners(g: &mut Grid) {
    loop {
        let mut changed = false;
        for y in 0..g.h {
            for x in 0..g.w {
                if !g.on[y * g.w + x] {
                    continue;
                }
                let r = g.ring(x, y);
                // only pixels whose removal leaves their 4-neighbours
                // diagonally joined; straight line pixels are never simple
                let four = [r[0], r[2], r[4], r[6]].iter().filter(|&&b| b).count();
                if neighbours(&r) >= 2 && four >= 2 && is_simple(&r) && !is_straight(&r) {
                    g.on[y * g.w + x] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

fn is_straight(r: &[bool; 8]) -> bool {
    (r[0] && r[4]) || (r[2] && r[6])
}

fn has_block(g: &Grid, x: usize, y: usize) -> bool {
    let (x, y) = (x as isize, y as isize);
    g.at(x, y) && g.at(x + 1, y) && g.at(x, y + 1) && g.at(x + 1, y + 1)
}

/// Breaks leftover 2×2 blocks: deletes a simple block pixel if there is
/// one, otherwise moves a block pixel onto a free 4-neighbour when that
/// keeps the component count, otherwise deletes any block pixel that
/// keeps it.
fn break_blocks(g: &mut Grid) {
    let count = |g: &Grid| {
        let img = GlyphImage::from_pixels(g.w, g.h, g.on.iter().map(|&b| b as u8 as f32).collect());
        label_components(&img).1
    };
    let mut components = None;
    for _ in 0..g.w * g.h {
        let Some((bx, by)) = (0..g.h.saturating_sub(1))
            .flat_map(|y| (0..g.w - 1).map(move |x| (x, y)))
            .find(|&(x, y)| has_block(g, x, y))
        else {
            return;
        };
        let block = [(bx, by), (bx + 1, by), (bx, by + 1), (bx + 1, by + 1)];
        if let Some(&(x, y)) = block.iter().find(|&&(x, y)| {
            let r = g.ring(x, y);
            neighbours(&r) >= 2 && is_simple(&r)
        }) {
            g.on[y * g.w + x] = false;
            continue;
        }
        let target = *components.get_or_insert_with(|| count(g));
        let mut fixed = false;
        'search: for &(x, y) in &block {
            for (dx, dy) in [(0isize, -1isize), (1, 0), (0, 1), (-1, 0)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= g.w || ny as usize >= g.h || g.at(nx, ny) {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                g.on[y * g.w + x] = false;
                g.on[ny * g.w + nx] = true;
                let blocks_near = (ny.saturating_sub(1)..=ny)
                    .any(|yy| (nx.saturating_sub(1)..=nx).any(|xx| has_block(g, xx, yy)));
                if !blocks_near && count(g) == target {
                    fixed = true;
                    break 'search;
                }
                g.on[ny * g.w + nx] = false;
                g.on[y * g.w + x] = true;
            }
        }
        if !fixed {
            // every block pixel closes a hole: open one, which merges
            // background regions but keeps the components
            for &(x, y) in &block {
                g.on[y * g.w + x] = false;
                if count(g) == target {
                    fixed = true;
                    break;
                }
                g.on[y * g.w + x] = true;
            }
        }
        if !fixed {
            return;
        }
    }
}
