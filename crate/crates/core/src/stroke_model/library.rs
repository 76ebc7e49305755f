use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gmm::{self, Covariance, GmmConfig};
use super::program::SymbolProgram;
use super::substroke::{unflatten, SubStroke};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::rng::Rng;

pub const LIBRARY_FORMAT: u32 = 1;

/// Prior over the start location of independently placed parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionPrior {
    /// Isotropic Gaussian.
    Gaussian { mean: Point, sigma: f64 },
    /// Uniform over an axis-aligned rectangle.
    Uniform { min: Point, max: Point },
}

impl PositionPrior {
    pub fn log_density(&self, p: Point) -> f64 {
        match *self {
            PositionPrior::Gaussian { mean, sigma } => {
                let d2 = (p - mean).dot(p - mean);
                -0.5 * d2 / (sigma * sigma) - (2.0 * std::f64::consts::PI * sigma * sigma).ln()
            }
            PositionPrior::Uniform { min, max } => {
                if p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y {
                    -((max.x - min.x) * (max.y - min.y)).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Point {
        use rand::Rng as _;
        use rand_distr::{Distribution, StandardNormal};
        match *self {
            PositionPrior::Gaussian { mean, sigma } => {
                let zx: f64 = StandardNormal.sample(rng);
                let zy: f64 = StandardNormal.sample(rng);
                mean + Point::new(zx, zy) * sigma
            }
            PositionPrior::Uniform { min, max } => Point::new(
                min.x + rng.random::<f64>() * (max.x - min.x),
                min.y + rng.random::<f64>() * (max.y - min.y),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryConfig {
    /// Points per normalised sub-stroke.
    pub resample: usize,
    pub kappa_max: usize,
    pub n_max: usize,
    pub num_primitives: usize,
    pub gmm: GmmConfig,
    pub position_prior: PositionPrior,
    /// Side of the square working canvas programs live on, in pixels.
    pub canvas: usize,
    /// Floor on the per-primitive log-scale standard deviation.
    pub min_log_scale_std: f64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig {
            resample: 10,
            kappa_max: 6,
            n_max: 4,
            num_primitives: 64,
            gmm: GmmConfig::default(),
            position_prior: PositionPrior::Gaussian {
                mean: Point::new(52.0, 52.0),
                sigma: 25.0,
            },
            canvas: 105,
            min_log_scale_std: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub mean_trajectory: Vec<Point>,
    /// Covariance over the flattened trajectory coordinates.
    pub covariance: Covariance,
    pub weight: f64,
    /// Mean and standard deviation of the log of the sub-stroke extent.
    pub log_scale_mean: f64,
    pub log_scale_std: f64,
}

impl Primitive {
    pub fn flat_mean(&self) -> Vec<f64> {
        super::substroke::flatten(&self.mean_trajectory)
    }

    /// Density of a shape offset from the mean trajectory.
    pub fn offset_log_density(&self, offset: &[f64]) -> f64 {
        self.covariance.log_density(offset)
    }

    /// Density of a sub-stroke scale, measured with respect to its logarithm.
    pub fn scale_log_density(&self, scale: f64) -> f64 {
        if scale <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = (scale.ln() - self.log_scale_mean) / self.log_scale_std;
        -0.5 * z * z - self.log_scale_std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Distributions over the number of parts and sub-parts. Index 0 holds
/// the probability of a count of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    pub p_kappa: Vec<f64>,
    pub p_n_given_kappa: Vec<Vec<f64>>,
}

impl CountModel {
    pub fn uniform(kappa_max: usize, n_max: usize) -> Self {
        CountModel {
            p_kappa: vec![1.0 / kappa_max as f64; kappa_max],
            p_n_given_kappa: vec![vec![1.0 / n_max as f64; n_max]; kappa_max],
        }
    }

    pub fn kappa_prob(&self, kappa: usize) -> f64 {
        kappa
            .checked_sub(1)
            .and_then(|i| self.p_kappa.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn n_prob(&self, n: usize, kappa: usize) -> f64 {
        kappa
            .checked_sub(1)
            .and_then(|k| self.p_n_given_kappa.get(k))
            .and_then(|row| n.checked_sub(1).and_then(|i| row.get(i)))
            .copied()
            .unwrap_or(0.0)
    }
}

/// First-order Markov chain over primitive indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub initial: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl TransitionModel {
    pub fn uniform(k: usize) -> Self {
        TransitionModel {
            initial: vec![1.0 / k as f64; k],
            rows: vec![vec![1.0 / k as f64; k]; k],
        }
    }

    /// Log-probability of a sub-part primitive sequence.
    pub fn sequence_log_prob(&self, seq: &[usize]) -> f64 {
        let Some(&first) = seq.first() else {
            return 0.0;
        };
        let mut lp = self.initial[first].ln();
        for w in seq.windows(2) {
            lp += self.rows[w[0]][w[1]].ln();
        }
        lp
    }
}

/// The learned alphabet of motion: primitives plus count and transition
/// models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveLibrary {
    pub format: u32,
    pub config: LibraryConfig,
    pub primitives: Vec<Primitive>,
    pub count_model: CountModel,
    pub transition_model: TransitionModel,
}

impl PrimitiveLibrary {
    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Index of the primitive maximising weight × shape density, together
    /// with the offset of `shape` from that primitive's mean.
    pub fn classify(&self, shape: &SubStroke) -> (usize, Vec<f64>) {
        self.classify_observed(shape, 0.0)
    }

    /// As [`classify`](Self::classify), treating `shape` as a primitive draw
    /// observed under isotropic noise of variance `noise`.
    pub fn classify_observed(&self, shape: &SubStroke, noise: f64) -> (usize, Vec<f64>) {
        let x = shape.flatten();
        let best = self
            .primitives
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let lp = p.weight.ln()
                    + p.covariance
                        .with_noise(noise)
                        .log_density(&diff(&x, &p.flat_mean()))
                    + p.scale_log_density(shape.extent);
                (i, lp)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("library has at least one primitive");
        (best, diff(&x, &self.primitives[best].flat_mean()))
    }

    pub fn with_models(mut self, counts: CountModel, transitions: TransitionModel) -> Self {
        self.count_model = counts;
        self.transition_model = transitions;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProgram(format!("invalid library: {m}")));
        if self.format != LIBRARY_FORMAT {
            return Err(Error::FormatVersion(self.format));
        }
        if self.primitives.is_empty() {
            return bad("no primitives");
        }
        let dim = 2 * self.config.resample;
        let wsum: f64 = self.primitives.iter().map(|p| p.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return bad("primitive weights do not sum to 1");
        }
        for p in &self.primitives {
            if p.mean_trajectory.len() != self.config.resample || p.covariance.dim() != dim {
                return bad("primitive dimension mismatch");
            }
            if !(p.weight > 0.0 && p.weight <= 1.0) || p.log_scale_std <= 0.0 {
                return bad("primitive parameters out of range");
            }
        }
        let k = self.primitives.len();
        let cm = &self.count_model;
        let tm = &self.transition_model;
        let normalized = |v: &[f64]| (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if cm.p_kappa.len() != self.config.kappa_max
            || cm.p_n_given_kappa.len() != self.config.kappa_max
            || !normalized(&cm.p_kappa)
            || cm
                .p_n_given_kappa
                .iter()
                .any(|r| r.len() != self.config.n_max || !normalized(r))
        {
            return bad("count model malformed");
        }
        if tm.initial.len() != k
            || tm.rows.len() != k
            || !normalized(&tm.initial)
            || tm.rows.iter().any(|r| r.len() != k || !normalized(r))
        {
            return bad("transition model malformed");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lib: PrimitiveLibrary = serde_json::from_str(text)?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Fits `k` primitives to normalised sub-strokes. Count and transition
/// models start uniform; see [`fit_count_models`].
pub fn fit_primitive_library(
    substrokes: &[SubStroke],
    k: usize,
    config: &LibraryConfig,
    seed: u64,
) -> Result<PrimitiveLibrary> {
    if substrokes.len() < k || k == 0 {
        return Err(Error::InsufficientData(format!(
            "{} sub-strokes cannot support {k} primitives",
            substrokes.len()
        )));
    }
    if substrokes.iter().any(|s| s.points.len() != config.resample) {
        return Err(Error::InsufficientData(
            "sub-strokes are not resampled to the configured length".into(),
        ));
    }
    let data: Vec<Vec<f64>> = substrokes.iter().map(SubStroke::flatten).collect();
    let fit = gmm::fit_gmm(&data, k, &config.gmm, seed)?;

    let all_logs: Vec<f64> = substrokes.iter().map(|s| s.extent.max(1e-9).ln()).collect();
    let global = mean_std(&all_logs);
    let primitives = fit
        .components
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            let logs: Vec<f64> = fit
                .assignments
                .iter()
                .zip(&all_logs)
                .filter(|(a, _)| **a == j)
                .map(|(_, l)| *l)
                .collect();
            let (m, s) = if logs.is_empty() {
                global
            } else {
                mean_std(&logs)
            };
            Primitive {
                mean_trajectory: unflatten(&c.mean),
                covariance: c.covariance,
                weight: c.weight,
                log_scale_mean: m,
                log_scale_std: s.max(config.min_log_scale_std),
            }
        })
        .collect::<Vec<_>>();
    let k = primitives.len();
    Ok(PrimitiveLibrary {
        format: LIBRARY_FORMAT,
        config: LibraryConfig {
            num_primitives: k,
            ..config.clone()
        },
        primitives,
        count_model: CountModel::uniform(config.kappa_max, config.n_max),
        transition_model: TransitionModel::uniform(k),
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Add-one smoothed count, sub-part count and transition models estimated
/// from a corpus of programs.
pub fn fit_count_models(
    programs: &[SymbolProgram],
    lib: &PrimitiveLibrary,
) -> Result<(CountModel, TransitionModel)> {
    if programs.is_empty() {
        return Err(Error::InsufficientData("no programs to count".into()));
    }
    let cfg = &lib.config;
    let k = lib.primitives.len();
    let mut kappa = vec![0.0; cfg.kappa_max];
    let mut n_given = vec![vec![0.0; cfg.n_max]; cfg.kappa_max];
    let mut initial = vec![0.0; k];
    let mut trans = vec![vec![0.0; k]; k];
    for psi in programs {
        let kp = psi.parts.len();
        if kp == 0 || kp > cfg.kappa_max {
            return Err(Error::InvalidProgram(format!(
                "{kp} parts outside 1..={}",
                cfg.kappa_max
            )));
        }
        kappa[kp - 1] += 1.0;
        for part in &psi.parts {
            let n = part.primitives.len();
            if n == 0 || n > cfg.n_max {
                return Err(Error::InvalidProgram(format!(
                    "{n} sub-parts outside 1..={}",
                    cfg.n_max
                )));
            }
            if part.primitives.iter().any(|&p| p >= k) {
                return Err(Error::InvalidProgram("primitive index out of range".into()));
            }
            n_given[kp - 1][n - 1] += 1.0;
            initial[part.primitives[0]] += 1.0;
            for w in part.primitives.windows(2) {
                trans[w[0]][w[1]] += 1.0;
            }
        }
    }
    let smooth = |counts: &[f64]| -> Vec<f64> {
        let total: f64 = counts.iter().sum::<f64>() + counts.len() as f64;
        counts.iter().map(|c| (c + 1.0) / total).collect()
    };
    Ok((
        CountModel {
            p_kappa: smooth(&kappa),
            p_n_given_kappa: n_given.iter().map(|r| smooth(r)).collect(),
        },
        TransitionModel {
            initial: smooth(&initial),
            rows: trans.iter().map(|r| smooth(r)).collect(),
        },
    ))
}
