//! Parse → program conversion: corner splitting, primitive assignment and
//! geometric relation inference.

use serde::{Deserialize, Serialize};

use super::walk::Parse;
use crate::geometry::{self, Point};
use crate::stroke_model::{normalize_substroke, Part, PrimitiveLibrary, Relation, SymbolProgram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvertConfig {
    /// Half-width, in pixels, of the shorter chords used to measure turning
    /// angles; the longer chords are twice this.
    pub corner_window: usize,
    /// Minimum corner score, in degrees, for a sub-stroke break.
    pub corner_angle_deg: f64,
    /// Moving-average radius, in pixels, applied before measuring angles.
    pub smoothing: usize,
    /// A stroke starting within this many pixels of an earlier stroke
    /// attaches to it.
    pub snap_radius: f64,
    /// Variance, in normalised units, of the tracing noise on skeleton
    /// sub-strokes; used to pick primitives and, outside fast mode, to
    /// shrink shape offsets.
    pub offset_noise: f64,
}

impl Default for ConvertConfig {
    fn default() -> Self {
        ConvertConfig {
            corner_window: 5,
            corner_angle_deg: 30.0,
            smoothing: 2,
            snap_radius: 2.0,
            offset_noise: 3e-3,
        }
    }
}

/// Makes sure a trajectory has positive length; lone pixels become a one
/// pixel dash.
pub(crate) fn usable(points: &[Point]) -> Vec<Point> {
    if geometry::arc_length(points) >= 1.0 {
        return points.to_vec();
    }
    let p = points[0];
    vec![p, p + Point::new(1.0, 0.0)]
}

fn turning(a: Point, b: Point) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    if c.is_finite() {
        c.clamp(-1.0, 1.0).acos()
    } else {
        0.0
    }
}

/// Moving average over `radius` neighbours each side, shrinking the window
/// near the ends so they stay fixed.
fn smoothed(points: &[Point], radius: usize) -> Vec<Point> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let r = radius.min(i).min(n - 1 - i);
            let window = &points[i - r..=i + r];
            window.iter().fold(Point::ORIGIN, |a, &p| a + p) * (1.0 / window.len() as f64)
        })
        .collect()
}

/// Splits a trajectory at its corners, at most `max_parts - 1` of them.
/// The corner score at a point is `2·θ(w) − θ(2w)`, with `θ(h)` the angle
/// between the chords reaching `h` pixels back and ahead. Constant
/// curvature cancels out while a sharp turn keeps its full angle; breaks are
/// local maxima of the score above the configured threshold.
pub fn split_at_corners(
    points: &[Point],
    cfg: &ConvertConfig,
    max_parts: usize,
) -> Vec<Vec<Point>> {
    let points = usable(points);
    let length = geometry::arc_length(&points);
    let count = (length.ceil() as usize + 1).max(2);
    let dense = geometry::resample_uniform(&points, count);
    let w = cfg.corner_window.max(1);
    if dense.len() < 4 * w + 1 || max_parts <= 1 {
        return vec![points];
    }
    let threshold = cfg.corner_angle_deg.to_radians();
    let smooth = smoothed(&dense, cfg.smoothing);
    let theta = |i: usize, h: usize| turning(smooth[i] - smooth[i - h], smooth[i + h] - smooth[i]);
    let angles: Vec<f64> = (0..dense.len())
        .map(|i| {
            if i < 2 * w || i + 2 * w >= dense.len() {
                0.0
            } else {
                2.0 * theta(i, w) - theta(i, 2 * w)
            }
        })
        .collect();
    let peaks: Vec<usize> = (2 * w..dense.len() - 2 * w)
        .filter(|&i| {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(dense.len() - 1);
            angles[i] > threshold
                && (lo..=hi).all(|j| angles[j] < angles[i] || (angles[j] == angles[i] && j >= i))
        })
        .collect();
    // a pen-rounded corner shows up as two nearby peaks: merge peaks closer
    // than 2w into one break at their score-weighted centre
    let mut clusters: Vec<(usize, f64)> = Vec::new();
    let mut group: Vec<usize> = Vec::new();
    for (k, &i) in peaks.iter().enumerate() {
        group.push(i);
        if peaks.get(k + 1).is_none_or(|&next| next - i > 2 * w) {
            let mass: f64 = group.iter().map(|&j| angles[j]).sum();
            let centre = group.iter().map(|&j| j as f64 * angles[j]).sum::<f64>() / mass;
            let strength = group.iter().map(|&j| angles[j]).fold(0.0, f64::max);
            clusters.push((centre.round() as usize, strength));
            group.clear();
        }
    }
    clusters.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    clusters.truncate(max_parts - 1);
    let mut peaks: Vec<usize> = clusters.into_iter().map(|(i, _)| i).collect();
    peaks.sort_unstable();
    let mut out = Vec::with_capacity(peaks.len() + 1);
    let mut start = 0;
    for &b in peaks.iter().chain(std::iter::once(&(dense.len() - 1))) {
        out.push(dense[start..=b].to_vec());
        start = b;
    }
    out
}

/// One stroke as a part: sub-strokes at corners, each assigned its
/// highest-density primitive. Fast mode keeps the raw residual as the shape
/// offset; otherwise the offset is shrunk towards the primitive mean.
pub fn stroke_to_part(
    points: &[Point],
    lib: &PrimitiveLibrary,
    cfg: &ConvertConfig,
    fast_mode: bool,
) -> Part {
    let mut part = Part {
        primitives: Vec::new(),
        offsets: Vec::new(),
        scales: Vec::new(),
    };
    for sub in split_at_corners(points, cfg, lib.config.n_max) {
        let shape =
            normalize_substroke(&sub, lib.config.resample).expect("sub-stroke has positive length");
        let (idx, residual) = lib.classify_observed(&shape, cfg.offset_noise);
        let offset = if fast_mode {
            residual
        } else {
            lib.primitives[idx]
                .covariance
                .shrink(&residual, cfg.offset_noise)
        };
        part.primitives.push(idx);
        part.offsets.push(offset);
        part.scales.push(shape.extent);
    }
    part
}

/// Log-probability contributions of a single part that do not depend on
/// the rest of the program.
pub(crate) fn part_log_prob(part: &Part, lib: &PrimitiveLibrary) -> f64 {
    let mut lp = lib.transition_model.sequence_log_prob(&part.primitives);
    for ((&prim, offset), &scale) in part.primitives.iter().zip(&part.offsets).zip(&part.scales) {
        let p = &lib.primitives[prim];
        lp += p.offset_log_density(offset) + p.scale_log_density(scale);
    }
    lp
}

/// Relation of each stroke to the ones before it: starting on an earlier
/// stroke's start or end gives AtStart / AtEnd, starting on its interior
/// gives Along with the arc-length fraction, anything else is Independent
/// at the start point.
pub fn infer_relations(strokes: &[Vec<Point>], snap_radius: f64) -> Vec<Relation> {
    strokes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let start = s[0];
            let earlier = &strokes[..i];
            let at_end = |pick: fn(&Vec<Point>) -> Point| {
                earlier
                    .iter()
                    .enumerate()
                    .map(|(j, t)| (j, pick(t).dist(start)))
                    .filter(|&(_, d)| d <= snap_radius)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            };
            let first = at_end(|t| t[0]);
            let last = at_end(|t| *t.last().unwrap());
            match (first, last) {
                (Some((j, a)), Some((k, b))) => {
                    if b < a {
                        Relation::AtEnd { target: k }
                    } else {
                        Relation::AtStart { target: j }
                    }
                }
                (Some((j, _)), None) => Relation::AtStart { target: j },
                (None, Some((k, _))) => Relation::AtEnd { target: k },
                (None, None) => earlier
                    .iter()
                    .enumerate()
                    .map(|(j, t)| (j, geometry::project_onto(t, start)))
                    .filter(|(_, (_, d))| *d <= snap_radius)
                    .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                    .map(|(j, (tau, _))| Relation::Along { target: j, tau })
                    .unwrap_or(Relation::Independent { position: start }),
            }
        })
        .collect()
}

/// Converts a parse into a program: one part per stroke, in parse order.
/// Strokes beyond the library's part limit are dropped, shortest first.
pub fn parse_to_program(
    parse: &Parse,
    lib: &PrimitiveLibrary,
    cfg: &ConvertConfig,
    fast_mode: bool,
) -> SymbolProgram {
    let trajectories = kept_strokes(
        parse.strokes.iter().map(|s| usable(&s.points)).collect(),
        lib.config.kappa_max,
    );
    program_from_trajectories(&trajectories, lib, cfg, fast_mode)
}

pub(crate) fn program_from_trajectories(
    trajectories: &[Vec<Point>],
    lib: &PrimitiveLibrary,
    cfg: &ConvertConfig,
    fast_mode: bool,
) -> SymbolProgram {
    SymbolProgram {
        parts: trajectories
            .iter()
            .map(|t| stroke_to_part(t, lib, cfg, fast_mode))
            .collect(),
        relations: infer_relations(trajectories, cfg.snap_radius),
    }
}

fn kept_strokes(strokes: Vec<Vec<Point>>, kappa_max: usize) -> Vec<Vec<Point>> {
    if strokes.len() <= kappa_max {
        return strokes;
    }
    let mut order: Vec<usize> = (0..strokes.len()).collect();
    order.sort_by(|&a, &b| {
        geometry::arc_length(&strokes[b])
            .total_cmp(&geometry::arc_length(&strokes[a]))
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order[..kappa_max].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| strokes[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: Point, b: Point, n: usize) -> Vec<Point> {
        (0..=n).map(|i| a.lerp(b, i as f64 / n as f64)).collect()
    }

    #[test]
    fn straight_line_has_no_corner() {
        let s = split_at_corners(
            &line(Point::new(0.0, 0.0), Point::new(30.0, 0.0), 30),
            &ConvertConfig::default(),
            4,
        );
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn smooth_arc_has_no_corner() {
        // a half circle of radius 12 turns 10 degrees per chord step of 4
        let arc: Vec<Point> = (0..=60)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 60.0;
                Point::new(12.0 * a.cos(), 12.0 * a.sin())
            })
            .collect();
        assert_eq!(
            split_at_corners(&arc, &ConvertConfig::default(), 4).len(),
            1
        );
    }

    #[test]
    fn right_angle_splits_at_the_corner() {
        let mut pts = line(Point::new(0.0, 0.0), Point::new(20.0, 0.0), 20);
        pts.extend(
            line(Point::new(20.0, 0.0), Point::new(20.0, 20.0), 20)
                .into_iter()
                .skip(1),
        );
        let s = split_at_corners(&pts, &ConvertConfig::default(), 4);
        assert_eq!(s.len(), 2);
        let corner = s[0].last().unwrap();
        assert!(corner.dist(Point::new(20.0, 0.0)) <= 1.0, "{corner:?}");
        // the cap limits the number of pieces
        assert_eq!(
            split_at_corners(&pts, &ConvertConfig::default(), 1).len(),
            1
        );
    }

    #[test]
    fn relations_follow_the_geometry() {
        let a = line(Point::new(0.0, 10.0), Point::new(20.0, 10.0), 20);
        let at_end = line(Point::new(20.0, 10.0), Point::new(20.0, 30.0), 20);
        let along = line(Point::new(10.0, 11.0), Point::new(10.0, 30.0), 19);
        let free = line(Point::new(40.0, 40.0), Point::new(50.0, 40.0), 10);
        let rel = infer_relations(&[a, at_end, along, free], 2.0);
        assert_eq!(
            rel[0],
            Relation::Independent {
                position: Point::new(0.0, 10.0)
            }
        );
        assert_eq!(rel[1], Relation::AtEnd { target: 0 });
        match rel[2] {
            Relation::Along { target: 0, tau } => assert!((tau - 0.5).abs() < 0.05, "{tau}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(rel[3], Relation::Independent { .. }));
    }

    #[test]
    fn lone_pixel_becomes_a_dash() {
        let p = Point::new(3.0, 4.0);
        assert_eq!(usable(&[p]), vec![p, Point::new(4.0, 4.0)]);
    }
}
