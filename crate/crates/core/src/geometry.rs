//! Planar points and polyline helpers shared by the stroke model, the parser
//! and the renderer. Coordinates follow image convention: `x` grows to the
//! right, `y` grows downwards, pixel centres sit on integer coordinates.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Total length of a polyline.
pub fn arc_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Cumulative arc length at every vertex, starting at 0.
pub fn cumulative_lengths(points: &[Point]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(points.len());
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            total += points[i - 1].dist(*p);
        }
        acc.push(total);
    }
    acc
}

/// Point at fraction `t` in [0,1] of the polyline's arc length.
pub fn point_at_fraction(points: &[Point], t: f64) -> Point {
    match points.len() {
        0 => Point::ORIGIN,
        1 => points[0],
        _ => {
            let cum = cumulative_lengths(points);
            let total = *cum.last().unwrap();
            if total <= 0.0 {
                return points[0];
            }
            point_at_length(points, &cum, t.clamp(0.0, 1.0) * total)
        }
    }
}

fn point_at_length(points: &[Point], cum: &[f64], target: f64) -> Point {
    // first vertex whose cumulative length reaches the target
    let idx = cum.partition_point(|&c| c < target);
    if idx == 0 {
        return points[0];
    }
    if idx >= points.len() {
        return *points.last().unwrap();
    }
    let seg = cum[idx] - cum[idx - 1];
    if seg <= 0.0 {
        return points[idx];
    }
    let t = (target - cum[idx - 1]) / seg;
    points[idx - 1].lerp(points[idx], t)
}

/// Resample to `count` points spaced uniformly by arc length. Endpoints are
/// preserved exactly.
pub fn resample_uniform(points: &[Point], count: usize) -> Vec<Point> {
    assert!(count >= 2, "resampling needs at least two output points");
    let cum = cumulative_lengths(points);
    let total = *cum.last().unwrap_or(&0.0);
    (0..count)
        .map(|i| {
            if i == count - 1 {
                *points.last().unwrap()
            } else {
                let target = total * i as f64 / (count - 1) as f64;
                point_at_length(points, &cum, target)
            }
        })
        .collect()
}

/// Resample to `count` points along the polyline such that consecutive
/// output points are equally far apart (equal chords). The output is thus
/// uniformly spaced by its own arc length, and resampling it again returns
/// the same points.
pub fn resample_equal_chords(points: &[Point], count: usize) -> Vec<Point> {
    assert!(count >= 2, "resampling needs at least two output points");
    let total = arc_length(points);
    if points.len() < 2 || total <= 0.0 {
        return vec![points.first().copied().unwrap_or_default(); count];
    }
    let steps = count - 1;
    let end = *points.last().unwrap();
    let tol = 1e-12 * total.max(1.0);
    let landed = |c: f64| {
        chord_walk(points, c, steps)
            .filter(|w| w[steps].dist(end) <= tol && (w[steps - 1].dist(w[steps]) - c).abs() <= tol)
    };
    let hi = total / steps as f64;
    if let Some(w) = landed(hi) {
        return w;
    }
    // Feasibility is monotone in the chord length for well-behaved strokes,
    // so a bisection usually lands the last chord on the endpoint; wildly
    // self-crossing input falls back to a scan for the largest such chord.
    if let Some(w) = chord_bisect(points, steps, 0.0, hi).and_then(landed) {
        return w;
    }
    const SCAN: usize = 512;
    let mut prev_ok = false;
    for j in (1..=SCAN).rev() {
        let c = hi * j as f64 / SCAN as f64;
        let ok = chord_walk(points, c, steps).is_some();
        if ok && !prev_ok && j < SCAN {
            let upper = hi * (j + 1) as f64 / SCAN as f64;
            if let Some(w) = chord_bisect(points, steps, c, upper).and_then(landed) {
                return w;
            }
        }
        prev_ok = ok;
    }
    // Sharp turns can make the walk jump past every landing chord. Uniform
    // arc-length resampling, repeated, converges to an equal-chord polyline.
    let mut out = resample_uniform(points, count);
    for _ in 0..10_000 {
        let next = resample_uniform(&out, count);
        let moved = out
            .iter()
            .zip(&next)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        out = next;
        if moved <= 1e-14 * total.max(1.0) {
            break;
        }
    }
    out
}

/// Largest feasible chord length in `[lo, hi]`, assuming `lo` is feasible
/// (or zero) and `hi` is not.
fn chord_bisect(points: &[Point], steps: usize, mut lo: f64, mut hi: f64) -> Option<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chord_walk(points, mid, steps).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

/// Walks `steps` chords of length `c` along the polyline; `None` if the
/// polyline ends first.
fn chord_walk(points: &[Point], c: f64, steps: usize) -> Option<Vec<Point>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut q = points[0];
    out.push(q);
    let (mut seg, mut s0) = (0usize, 0.0f64);
    'step: for _ in 0..steps {
        while seg + 1 < points.len() {
            let a = points[seg];
            let d = points[seg + 1] - a;
            let dd = d.dot(d);
            if dd > 0.0 {
                // |a + s d - q|^2 = c^2, take the larger root
                let w = a - q;
                let b = w.dot(d);
                let cc = w.dot(w) - c * c;
                let disc = b * b - dd * cc;
                if disc >= 0.0 {
                    let s = (-b + disc.sqrt()) / dd;
                    // vertices sit exactly one chord apart on resampled input
                    let s = if s > 1.0 && s < 1.0 + 1e-9 { 1.0 } else { s };
                    if s >= s0 && s <= 1.0 {
                        q = a + d * s;
                        out.push(q);
                        s0 = s;
                        continue 'step;
                    }
                }
            }
            seg += 1;
            s0 = 0.0;
        }
        return None;
    }
    Some(out)
}

/// Arc-length fraction of the polyline point closest to `q`, with the distance.
pub fn project_onto(points: &[Point], q: Point) -> (f64, f64) {
    if points.len() < 2 {
        return (0.0, points.first().map_or(f64::INFINITY, |p| p.dist(q)));
    }
    let cum = cumulative_lengths(points);
    let total = *cum.last().unwrap();
    let mut best = (0.0, f64::INFINITY);
    for (i, w) in points.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len2 = d.dot(d);
        let t = if len2 > 0.0 {
            ((q - w[0]).dot(d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let p = w[0] + d * t;
        let dist = p.dist(q);
        if dist < best.1 {
            let along = cum[i] + t * (cum[i + 1] - cum[i]);
            best = (if total > 0.0 { along / total } else { 0.0 }, dist);
        }
    }
    best
}

/// Uniform Catmull-Rom interpolation through `control`, sampled so that
/// consecutive output points are at most `step` apart. End tangents use
/// reflected phantom points, so collinear evenly spaced input stays linear.
pub fn catmull_rom(control: &[Point], step: f64) -> Vec<Point> {
    match control.len() {
        0 => return Vec::new(),
        1 => return vec![control[0]],
        _ => {}
    }
    let n = control.len();
    let at = |i: isize| -> Point {
        if i < 0 {
            control[0] * 2.0 - control[1]
        } else if i as usize >= n {
            control[n - 1] * 2.0 - control[n - 2]
        } else {
            control[i as usize]
        }
    };
    let mut out = vec![control[0]];
    for i in 0..n - 1 {
        let (p0, p1, p2, p3) = (
            at(i as isize - 1),
            at(i as isize),
            at(i as isize + 1),
            at(i as isize + 2),
        );
        let samples = ((p1.dist(p2) / step).ceil() as usize).max(1);
        for s in 1..=samples {
            let t = s as f64 / samples as f64;
            let t2 = t * t;
            let t3 = t2 * t;
            let p = (p1 * 2.0
                + (p2 - p0) * t
                + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
                + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
                * 0.5;
            out.push(p);
        }
    }
    out
}

/// Axis-aligned bounds `(min, max)` of a point set.
pub fn bounds(points: impl IntoIterator<Item = Point>) -> Option<(Point, Point)> {
    let mut it = points.into_iter();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), p| {
        (
            Point::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point::new(hi.x.max(p.x), hi.y.max(p.y)),
        )
    }))
}

/// Minimum distance between two segments.
pub fn segment_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    if segments_intersect(a0, a1, b0, b1) {
        return 0.0;
    }
    [
        point_segment_distance(a0, b0, b1),
        point_segment_distance(a1, b0, b1),
        point_segment_distance(b0, a0, a1),
        point_segment_distance(b1, a0, a1),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.dist(a + d * t)
}

fn segments_intersect(a0: Point, a1: Point, b0: Point, b1: Point) -> bool {
    let d1 = (a1 - a0).cross(b0 - a0);
    let d2 = (a1 - a0).cross(b1 - a0);
    let d3 = (b1 - b0).cross(a0 - b0);
    let d4 = (b1 - b0).cross(a1 - b0);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_line_is_evenly_spaced() {
        let pts = [Point::new(0.0, 0.0), Point::new(9.0, 0.0)];
        let r = resample_uniform(&pts, 10);
        for (i, p) in r.iter().enumerate() {
            assert!((p.x - i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn catmull_rom_keeps_collinear_points_on_the_line() {
        let pts: Vec<_> = (0..5).map(|i| Point::new(i as f64 * 3.0, 2.0)).collect();
        let c = catmull_rom(&pts, 0.5);
        assert!(c.iter().all(|p| (p.y - 2.0).abs() < 1e-12));
        assert!(c.iter().all(|p| p.x >= -1e-12 && p.x <= 12.0 + 1e-12));
        assert_eq!(*c.last().unwrap(), Point::new(12.0, 2.0));
    }

    #[test]
    fn projection_finds_midpoint() {
        let pts = [Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        let (t, d) = project_onto(&pts, Point::new(5.0, 1.0));
        assert!((t - 0.5).abs() < 1e-12);
        assert!((d - 1.0).abs() < 1e-12);
    }
}
