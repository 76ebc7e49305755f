use rand::Rng as _;

use super::token::TokenParams;
use super::InkModel;
use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::image::GlyphImage;
use crate::rng::rng_from_seed;
use crate::stroke_model::{PrimitiveLibrary, Relation, SymbolProgram};

/// Spacing of the dense spline samples, pixels.
const SPLINE_STEP: f64 = 0.5;

/// Absolute control points of every part of `psi` under `theta`: sub-part
/// shapes chained pen-to-pen from the part's relation start, per-part affine
/// jitter about that start, then the global rescale about the centre of mass
/// and the global translation.
pub fn resolve_trajectories(
    psi: &SymbolProgram,
    theta: &TokenParams,
    lib: &PrimitiveLibrary,
) -> Result<Vec<Vec<Point>>> {
    psi.validate(lib)?;
    if theta.affine.len() != psi.kappa()
        || theta.start_jitter.len() != psi.kappa()
        || theta.trajectory_noise.len() != psi.kappa()
    {
        return Err(Error::InvalidProgram(
            "token does not match the program's part count".into(),
        ));
    }
    let mut parts: Vec<Vec<Point>> = Vec::with_capacity(psi.kappa());
    for (i, (part, rel)) in psi.parts.iter().zip(&psi.relations).enumerate() {
        let start = match *rel {
            Relation::Independent { position } => position + theta.start_jitter[i],
            Relation::AtStart { target } => parts[target][0],
            Relation::AtEnd { target } => *parts[target].last().unwrap(),
            Relation::Along { target, tau } => geometry::point_at_fraction(&parts[target], tau),
        };
        let mut pen = start;
        let mut control = vec![start];
        for j in 0..part.len() {
            let noise = theta.trajectory_noise[i].get(j);
            let shape: Vec<Point> = part
                .shape(j, lib)
                .into_iter()
                .enumerate()
                .map(|(k, p)| {
                    (p + noise
                        .and_then(|n| n.get(k))
                        .copied()
                        .unwrap_or(Point::ORIGIN))
                        * part.scales[j]
                })
                .collect();
            let shift = pen - shape[0];
            control.extend(shape[1..].iter().map(|&p| p + shift));
            pen = *control.last().unwrap();
        }
        let affine = theta.affine[i];
        parts.push(
            control
                .into_iter()
                .map(|p| start + affine.apply(p - start))
                .collect(),
        );
    }
    let all: Vec<Point> = parts.iter().flatten().copied().collect();
    let com = all.iter().fold(Point::ORIGIN, |a, &p| a + p) * (1.0 / all.len() as f64);
    Ok(parts
        .into_iter()
        .map(|ps| {
            ps.into_iter()
                .map(|p| com + (p - com) * theta.global_scale + theta.global_translation)
                .collect()
        })
        .collect())
}

/// Renders `psi` under `theta` onto a `width`×`height` canvas.
pub fn render(
    psi: &SymbolProgram,
    theta: &TokenParams,
    lib: &PrimitiveLibrary,
    ink: &InkModel,
    width: usize,
    height: usize,
) -> Result<GlyphImage> {
    let parts = resolve_trajectories(psi, theta, lib)?;
    let curves: Vec<Vec<Point>> = parts
        .iter()
        .map(|c| geometry::catmull_rom(c, SPLINE_STEP))
        .collect();
    let mut img = rasterize(&curves, ink.pen_width, width, height)?;
    if ink.blur_sigma > 0.0 {
        img = gaussian_blur(&img, ink.blur_sigma);
    }
    if ink.ink_noise > 0.0 {
        let mut rng = rng_from_seed(theta.ink_seed);
        img = img.map(|v| {
            if v > 0.0 && rng.random::<f64>() < ink.ink_noise {
                0.0
            } else {
                v
            }
        });
    }
    Ok(img.map(|v| v.clamp(0.0, 1.0)))
}

/// Draws polylines with a round pen of diameter `pen_width`: every pixel
/// takes coverage `clamp(r + 0.5 - d)` from its distance `d` to the nearest
/// segment. Fails when fewer than half of the curve samples land on the
/// canvas; anything else outside is clipped.
pub fn rasterize(
    curves: &[Vec<Point>],
    pen_width: f64,
    width: usize,
    height: usize,
) -> Result<GlyphImage> {
    let total: usize = curves.iter().map(Vec::len).sum();
    let inside = curves
        .iter()
        .flatten()
        .filter(|p| {
            p.x >= -0.5 && p.y >= -0.5 && p.x < width as f64 - 0.5 && p.y < height as f64 - 0.5
        })
        .count();
    if total == 0 || 2 * inside < total {
        let on_canvas = if total == 0 {
            0.0
        } else {
            100.0 * inside as f64 / total as f64
        };
        return Err(Error::OffCanvas { on_canvas });
    }
    let r = pen_width / 2.0;
    let reach = r + 0.5;
    let mut img = GlyphImage::new(width, height);
    for curve in curves {
        let segments: Vec<(Point, Point)> = match curve.len() {
            1 => vec![(curve[0], curve[0])],
            _ => curve.windows(2).map(|w| (w[0], w[1])).collect(),
        };
        for (a, b) in segments {
            let x0 = (a.x.min(b.x) - reach).floor().max(0.0) as usize;
            let y0 = (a.y.min(b.y) - reach).floor().max(0.0) as usize;
            let x1 = (a.x.max(b.x) + reach).ceil().min(width as f64 - 1.0);
            let y1 = (a.y.max(b.y) + reach).ceil().min(height as f64 - 1.0);
            if x1 < 0.0 || y1 < 0.0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let d = geometry::point_segment_distance(Point::new(x as f64, y as f64), a, b);
                    let v = (reach - d).clamp(0.0, 1.0) as f32;
                    if v > img.get(x, y) {
                        img.set(x, y, v);
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Separable Gaussian blur with a kernel truncated at 3σ.
pub fn gaussian_blur(img: &GlyphImage, sigma: f64) -> GlyphImage {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f32> = {
        let raw: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| (v / sum) as f32).collect()
    };
    let pass = |src: &GlyphImage, horizontal: bool| {
        let mut out = GlyphImage::new(src.width(), src.height());
        for y in 0..src.height() {
            for x in 0..src.width() {
                let acc: f32 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, w)| {
                        let o = k as isize - radius;
                        let v = if horizontal {
                            src.get_signed(x as isize + o, y as isize)
                        } else {
                            src.get_signed(x as isize, y as isize + o)
                        };
                        w * v
                    })
                    .sum();
                out.set(x, y, acc);
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::iou;
    use crate::stroke_model::{normalize_substroke, Part, Primitive};

    fn ink(pen: f64) -> InkModel {
        InkModel {
            pen_width: pen,
            blur_sigma: 0.0,
            ink_noise: 0.0,
        }
    }

    /// Library with a horizontal and a vertical straight primitive.
    fn bars() -> PrimitiveLibrary {
        let mut lib = crate::stroke_model::tests::toy_library(2);
        for (i, dir) in [Point::new(1.0, 0.0), Point::new(0.0, 1.0)]
            .into_iter()
            .enumerate()
        {
            let raw: Vec<Point> = (0..10).map(|k| dir * k as f64).collect();
            lib.primitives[i] = Primitive {
                mean_trajectory: normalize_substroke(&raw, 10).unwrap().points,
                ..lib.primitives[i].clone()
            };
        }
        lib
    }

    fn bar_part(prim: usize, length: f64) -> Part {
        Part {
            primitives: vec![prim],
            offsets: vec![vec![0.0; 20]],
            scales: vec![length],
        }
    }

    fn segment_oracle(a: Point, b: Point, pen: f64, size: usize) -> GlyphImage {
        let mut img = GlyphImage::new(size, size);
        for y in 0..size {
            for x in 0..size {
                let d = geometry::point_segment_distance(Point::new(x as f64, y as f64), a, b);
                img.set(x, y, (pen / 2.0 + 0.5 - d).clamp(0.0, 1.0) as f32);
            }
        }
        img
    }

    #[test]
    fn straight_program_renders_the_exact_segment() {
        let lib = bars();
        let psi = SymbolProgram {
            parts: vec![bar_part(0, 30.0)],
            relations: vec![Relation::Independent {
                position: Point::new(20.0, 40.0),
            }],
        };
        let out = render(
            &psi,
            &TokenParams::identity(&psi, 10),
            &lib,
            &ink(1.0),
            105,
            105,
        )
        .unwrap();
        let want = segment_oracle(Point::new(20.0, 40.0), Point::new(50.0, 40.0), 1.0, 105);
        for (a, b) in out.pixels().iter().zip(want.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn global_scale_doubles_the_bounding_box() {
        let lib = bars();
        let psi = SymbolProgram {
            parts: vec![bar_part(0, 20.0), bar_part(1, 16.0)],
            relations: vec![
                Relation::Independent {
                    position: Point::new(40.0, 40.0),
                },
                Relation::AtStart { target: 0 },
            ],
        };
        let mut theta = TokenParams::identity(&psi, 10);
        let bbox = |t: &TokenParams| {
            let img = render(&psi, t, &lib, &ink(1.0), 105, 105).unwrap();
            img.map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
                .ink_bbox()
                .unwrap()
        };
        let base = bbox(&theta);
        theta.global_scale = 2.0;
        let big = bbox(&theta);
        // the pen does not scale, so compare spans minus one pen width
        let span = |w: usize| w as f64 - 1.0;
        assert!(
            (span(big.width) - 2.0 * span(base.width)).abs() <= 1.0,
            "{base:?} {big:?}"
        );
        assert!(
            (span(big.height) - 2.0 * span(base.height)).abs() <= 1.0,
            "{base:?} {big:?}"
        );
    }

    #[test]
    fn along_attachment_matches_a_constructed_raster() {
        // a part starts at its attachment point, so the target is a T
        let lib = bars();
        let psi = SymbolProgram {
            parts: vec![bar_part(0, 40.0), bar_part(1, 40.0)],
            relations: vec![
                Relation::Independent {
                    position: Point::new(30.0, 50.0),
                },
                Relation::Along {
                    target: 0,
                    tau: 0.5,
                },
            ],
        };
        let theta = TokenParams::identity(&psi, 10);
        let got = render(&psi, &theta, &lib, &ink(3.0), 105, 105).unwrap();
        let mut want = segment_oracle(Point::new(30.0, 50.0), Point::new(70.0, 50.0), 3.0, 105);
        let vertical = segment_oracle(Point::new(50.0, 50.0), Point::new(50.0, 90.0), 3.0, 105);
        want.blit_max(&vertical, 0, 0);
        let bin = |g: &GlyphImage| g.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
        let score = iou(&bin(&got), &bin(&want));
        assert!(score >= 0.9, "iou {score}");
    }

    #[test]
    fn far_off_canvas_is_an_error_and_partial_is_clipped() {
        let lib = bars();
        let at = |x: f64| SymbolProgram {
            parts: vec![bar_part(0, 30.0)],
            relations: vec![Relation::Independent {
                position: Point::new(x, 50.0),
            }],
        };
        let off = at(300.0);
        let err = render(
            &off,
            &TokenParams::identity(&off, 10),
            &lib,
            &ink(2.0),
            105,
            105,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OffCanvas { .. }));
        let partial = at(85.0);
        let img = render(
            &partial,
            &TokenParams::identity(&partial, 10),
            &lib,
            &ink(2.0),
            105,
            105,
        )
        .unwrap();
        assert!(img.ink_count() > 0);
    }

    #[test]
    fn blur_preserves_mass_away_from_borders() {
        let mut img = GlyphImage::new(31, 31);
        img.set(15, 15, 1.0);
        let b = gaussian_blur(&img, 1.5);
        assert!((b.ink_mass() - 1.0).abs() < 1e-5);
        assert!(b.get(15, 15) < 1.0 && b.get(15, 15) > b.get(16, 15));
    }

    #[test]
    fn dropout_is_seeded() {
        let lib = bars();
        let psi = SymbolProgram {
            parts: vec![bar_part(0, 40.0)],
            relations: vec![Relation::Independent {
                position: Point::new(30.0, 50.0),
            }],
        };
        let mut theta = TokenParams::identity(&psi, 10);
        theta.ink_seed = 5;
        let noisy = InkModel {
            ink_noise: 0.3,
            ..ink(3.0)
        };
        let a = render(&psi, &theta, &lib, &noisy, 105, 105).unwrap();
        let b = render(&psi, &theta, &lib, &noisy, 105, 105).unwrap();
        let clean = render(&psi, &theta, &lib, &ink(3.0), 105, 105).unwrap();
        assert_eq!(a, b);
        assert!(a.ink_count() < clean.ink_count());
    }
}
