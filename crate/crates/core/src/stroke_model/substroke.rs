use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};

/// A sub-stroke resampled to a fixed number of points, centred on its mean
/// and scaled so its larger bounding-box side is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubStroke {
    pub points: Vec<Point>,
    /// Arc length of the raw input, in input units.
    pub arc_length: f64,
    /// Factor the raw input was divided by (its larger bounding-box side).
    pub extent: f64,
}

impl SubStroke {
    /// Flattened `[x0, y0, x1, y1, ...]` coordinates, the GMM feature vector.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.points)
    }
}

pub fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

pub fn unflatten(coords: &[f64]) -> Vec<Point> {
    coords
        .chunks_exact(2)
        .map(|c| Point::new(c[0], c[1]))
        .collect()
}

/// Resamples `raw` to `resample` equally spaced points along its length, moves the
/// mean to the origin and scales the larger bounding-box side to 1.
pub fn normalize_substroke(raw: &[Point], resample: usize) -> Result<SubStroke> {
    let first = *raw.first().ok_or(Error::DegenerateStroke)?;
    if raw.iter().all(|&p| p == first) {
        return Err(Error::DegenerateStroke);
    }
    let arc_length = geometry::arc_length(raw);
    let points = geometry::resample_equal_chords(raw, resample.max(2));
    let n = points.len() as f64;
    let mean = points.iter().fold(Point::ORIGIN, |acc, &p| acc + p) * (1.0 / n);
    let (lo, hi) = geometry::bounds(points.iter().copied()).expect("non-empty");
    let extent = (hi.x - lo.x).max(hi.y - lo.y);
    if extent <= 0.0 {
        return Err(Error::DegenerateStroke);
    }
    let points = points
        .iter()
        .map(|&p| (p - mean) * (1.0 / extent))
        .collect();
    Ok(SubStroke {
        points,
        arc_length,
        extent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn straight_segment_spans_unit_interval() {
        let s = normalize_substroke(&[Point::new(0.0, 0.0), Point::new(10.0, 0.0)], 10).unwrap();
        assert_eq!(s.points.len(), 10);
        assert!((s.arc_length - 10.0).abs() < 1e-12);
        for (i, p) in s.points.iter().enumerate() {
            let expected = -0.5 + i as f64 / 9.0;
            assert!((p.x - expected).abs() < 1e-12, "{p:?}");
            assert_eq!(p.y, 0.0);
        }
    }

    #[test]
    fn quarter_circle_length_matches_analytic_value() {
        let raw: Vec<_> = (0..100)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / 99.0;
                Point::new(4.0 * a.cos(), 4.0 * a.sin())
            })
            .collect();
        // polyline-sum oracle, independent of the normaliser
        let oracle: f64 = raw.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let s = normalize_substroke(&raw, 10).unwrap();
        let analytic = 2.0 * std::f64::consts::PI;
        assert!((s.arc_length - analytic).abs() / analytic < 0.01);
        assert!((s.arc_length - oracle).abs() < 1e-12);
    }

    #[test]
    fn identical_points_are_rejected() {
        let p = Point::new(3.0, 3.0);
        assert!(matches!(
            normalize_substroke(&[p, p, p], 10),
            Err(Error::DegenerateStroke)
        ));
        assert!(matches!(
            normalize_substroke(&[], 10),
            Err(Error::DegenerateStroke)
        ));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent_on_shape(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..8)
        ) {
            let raw: Vec<_> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
            prop_assume!(raw.windows(2).all(|w| w[0].dist(w[1]) > 1.0));
            let Ok(once) = normalize_substroke(&raw, 10) else { return Ok(()); };
            let twice = normalize_substroke(&once.points, 10).unwrap();
            for (a, b) in once.points.iter().zip(&twice.points) {
                prop_assert!(a.dist(*b) < 1e-9, "{a:?} vs {b:?}");
            }
            prop_assert!((twice.extent - 1.0).abs() < 1e-9);
            let (lo, hi) = geometry::bounds(once.points.iter().copied()).unwrap();
            prop_assert!((hi.x - lo.x).max(hi.y - lo.y) <= 1.0 + 1e-12);
        }
    }
}
