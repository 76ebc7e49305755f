use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::rng::Rng;
use crate::stroke_model::SymbolProgram;

/// Standard deviations of every token-level noise source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenSigmas {
    /// Per control point displacement, in normalised sub-stroke units
    /// (multiples of the sub-stroke extent).
    pub trajectory: f64,
    /// Per-part rotation, radians.
    pub rotation: f64,
    /// Per-part, per-axis log scale.
    pub part_log_scale: f64,
    pub shear: f64,
    /// Start location of independently placed parts, pixels.
    pub start: f64,
    pub global_log_scale: f64,
    /// Centre-of-mass translation, pixels.
    pub translation: f64,
}

impl TokenSigmas {
    pub const ZERO: TokenSigmas = TokenSigmas {
        trajectory: 0.0,
        rotation: 0.0,
        part_log_scale: 0.0,
        shear: 0.0,
        start: 0.0,
        global_log_scale: 0.0,
        translation: 0.0,
    };
}

/// Affine jitter applied to one part about its start point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartAffine {
    pub rotation: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub shear: f64,
}

impl PartAffine {
    pub const IDENTITY: PartAffine = PartAffine {
        rotation: 0.0,
        scale_x: 1.0,
        scale_y: 1.0,
        shear: 0.0,
    };

    /// Rotation after shear after axis scaling, applied to `v`.
    pub fn apply(&self, v: Point) -> Point {
        let sheared = Point::new(
            self.scale_x * v.x + self.shear * self.scale_y * v.y,
            self.scale_y * v.y,
        );
        sheared.rotate(self.rotation)
    }
}

/// Instance-level parameters θ for one rendering of a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenParams {
    /// Displacement of every control point in normalised sub-stroke units:
    /// part → sub-part → point.
    pub trajectory_noise: Vec<Vec<Vec<Point>>>,
    pub affine: Vec<PartAffine>,
    pub start_jitter: Vec<Point>,
    pub global_scale: f64,
    pub global_translation: Point,
    /// Seed of the ink-dropout stream.
    pub ink_seed: u64,
}

impl TokenParams {
    /// Zero noise, unit scales, no translation.
    pub fn identity(psi: &SymbolProgram, resample: usize) -> TokenParams {
        TokenParams {
            trajectory_noise: psi
                .parts
                .iter()
                .map(|p| vec![vec![Point::ORIGIN; resample]; p.len()])
                .collect(),
            affine: vec![PartAffine::IDENTITY; psi.kappa()],
            start_jitter: vec![Point::ORIGIN; psi.kappa()],
            global_scale: 1.0,
            global_translation: Point::ORIGIN,
            ink_seed: 0,
        }
    }
}

/// Zero-mean Gaussian draw clamped to six standard deviations.
fn gauss(sigma: f64, rng: &mut Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z.clamp(-6.0, 6.0)
}

fn gauss2(sigma: f64, rng: &mut Rng) -> Point {
    Point::new(gauss(sigma, rng), gauss(sigma, rng))
}

/// Draws θ for `psi`: independent zero-mean Gaussians for every field,
/// log-normal around 1 for scales.
pub fn sample_token(
    psi: &SymbolProgram,
    sigmas: &TokenSigmas,
    resample: usize,
    rng: &mut Rng,
) -> TokenParams {
    let traj = sigmas.trajectory;
    let trajectory_noise = psi
        .parts
        .iter()
        .map(|p| {
            (0..p.len())
                .map(|_| (0..resample).map(|_| gauss2(traj, rng)).collect())
                .collect()
        })
        .collect();
    let affine = psi
        .parts
        .iter()
        .map(|_| PartAffine {
            rotation: gauss(sigmas.rotation, rng),
            scale_x: gauss(sigmas.part_log_scale, rng).exp(),
            scale_y: gauss(sigmas.part_log_scale, rng).exp(),
            shear: gauss(sigmas.shear, rng),
        })
        .collect();
    let start_jitter = psi
        .parts
        .iter()
        .map(|_| gauss2(sigmas.start, rng))
        .collect();
    TokenParams {
        trajectory_noise,
        affine,
        start_jitter,
        global_scale: gauss(sigmas.global_log_scale, rng).exp(),
        global_translation: gauss2(sigmas.translation, rng),
        ink_seed: rng.random(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stroke_model::{sample_program, tests::toy_library};

    #[test]
    fn zero_sigmas_give_the_identity_token() {
        let lib = toy_library(3);
        let psi = sample_program(&lib, &mut rng_from_seed(2));
        let mut t = sample_token(&psi, &TokenSigmas::ZERO, 10, &mut rng_from_seed(3));
        t.ink_seed = 0;
        assert_eq!(t, TokenParams::identity(&psi, 10));
    }

    #[test]
    fn translation_spread_matches_sigma() {
        let lib = toy_library(1);
        let psi = sample_program(&lib, &mut rng_from_seed(0));
        let sigmas = TokenSigmas {
            translation: 2.0,
            ..TokenSigmas::ZERO
        };
        let mut rng = rng_from_seed(17);
        let draws: Vec<Point> = (0..10_000)
            .map(|_| sample_token(&psi, &sigmas, 10, &mut rng).global_translation)
            .collect();
        for axis in [|p: &Point| p.x, |p: &Point| p.y] {
            let v: Vec<f64> = draws.iter().map(axis).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
            // the sample sd of 10 000 normals has sd ≈ σ/√(2n) ≈ 0.014
            assert!((sd - 2.0).abs() < 0.05, "sd {sd}");
        }
    }

    #[test]
    fn draws_are_bounded_and_deterministic() {
        let lib = toy_library(4);
        let psi = sample_program(&lib, &mut rng_from_seed(9));
        let sigmas = TokenSigmas {
            trajectory: 0.02,
            rotation: 0.1,
            part_log_scale: 0.1,
            shear: 0.05,
            start: 1.0,
            global_log_scale: 0.1,
            translation: 2.0,
        };
        let a = sample_token(&psi, &sigmas, 10, &mut rng_from_seed(4));
        let b = sample_token(&psi, &sigmas, 10, &mut rng_from_seed(4));
        assert_eq!(a, b);
        assert!(a.global_scale > 0.0);
        assert!(a.affine.iter().all(|f| f.rotation.abs() <= 0.6 + 1e-12));
        assert!(a
            .trajectory_noise
            .iter()
            .flatten()
            .flatten()
            .all(|p| p.x.abs() <= 6.0 * 0.02 + 1e-12));
    }
}
