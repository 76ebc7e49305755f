//! Diagnostic renders: the skeleton over the binarized glyph, and the
//! strokes of a parse in distinct colours.

use image::{Rgb, RgbImage};

use super::graph::{NodeKind, SkeletonGraph};
use super::walk::Parse;
use crate::image::{encode_png, to_byte, GlyphImage};

const PALETTE: [[u8; 3]; 8] = [
    [220, 40, 40],
    [40, 110, 220],
    [30, 160, 60],
    [230, 150, 20],
    [150, 60, 200],
    [20, 170, 170],
    [200, 60, 140],
    [110, 110, 30],
];

fn backdrop(img: &GlyphImage) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        // ink shows as light grey so overlays stand out
        let v = to_byte(1.0 - 0.25 * img.get(x as usize, y as usize));
        Rgb([v, v, v])
    })
}

fn put(canvas: &mut RgbImage, x: f64, y: f64, colour: [u8; 3]) {
    let (xi, yi) = (x.round(), y.round());
    if xi >= 0.0 && yi >= 0.0 && (xi as u32) < canvas.width() && (yi as u32) < canvas.height() {
        canvas.put_pixel(xi as u32, yi as u32, Rgb(colour));
    }
}

/// PNG of the skeleton (black), endpoints (blue) and junctions (red) over
/// the glyph.
pub fn skeleton_overlay(img: &GlyphImage, graph: &SkeletonGraph) -> Vec<u8> {
    let mut canvas = backdrop(img);
    for e in &graph.edges {
        for &(x, y) in &e.pixels {
            put(&mut canvas, x as f64, y as f64, [0, 0, 0]);
        }
    }
    for n in &graph.nodes {
        let colour = match n.kind {
            NodeKind::Endpoint => [40, 110, 220],
            NodeKind::Junction => [220, 40, 40],
            NodeKind::Loop | NodeKind::Dot => [30, 160, 60],
        };
        for &(x, y) in &n.pixels {
            put(&mut canvas, x as f64, y as f64, colour);
        }
    }
    encode_png(image::DynamicImage::ImageRgb8(canvas))
}

/// PNG of each stroke of `parse` in its own colour, start points darkened.
pub fn parse_overlay(img: &GlyphImage, parse: &Parse) -> Vec<u8> {
    let mut canvas = backdrop(img);
    for (i, s) in parse.strokes.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        for p in &s.points {
            put(&mut canvas, p.x, p.y, colour);
        }
        if let Some(p) = s.points.first() {
            put(&mut canvas, p.x, p.y, colour.map(|c| c / 3));
        }
    }
    encode_png(image::DynamicImage::ImageRgb8(canvas))
}
