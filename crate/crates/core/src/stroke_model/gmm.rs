//! Gaussian mixtures fitted by expectation maximisation.
//!
//! Covariances are diagonal by default; full covariances are available for
//! larger corpora. In both cases the M-step enforces a lower bound on the
//! covariance eigenvalues by clipping, which is the exact constrained
//! maximiser, so the data log-likelihood stays monotone.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Covariance {
    /// Per-coordinate variances.
    Diagonal(Vec<f64>),
    /// Row-major symmetric matrix.
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(v) => v.len(),
            Covariance::Full(m) => m.len(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Covariance::Diagonal(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
            Covariance::Full(m) => {
                let n = m.len();
                let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
                mat.symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Log density of a zero-mean Gaussian with this covariance at `delta`.
    pub fn log_density(&self, delta: &[f64]) -> f64 {
        match self {
            Covariance::Diagonal(var) => {
                debug_assert_eq!(var.len(), delta.len());
                let mut acc = 0.0;
                for (&d, &v) in delta.iter().zip(var) {
                    acc += d * d / v + v.ln() + LN_2PI;
                }
                -0.5 * acc
            }
            Covariance::Full(m) => {
                let n = m.len();
                let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
                let chol = mat
                    .cholesky()
                    .expect("covariance must be positive definite");
                let d = DVector::from_column_slice(delta);
                let z = chol
                    .l()
                    .solve_lower_triangular(&d)
                    .expect("triangular solve");
                let logdet: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
                -0.5 * (z.norm_squared() + logdet + n as f64 * LN_2PI)
            }
        }
    }

    /// The covariance of a draw from `self` plus isotropic noise of
    /// variance `noise`.
    pub fn with_noise(&self, noise: f64) -> Covariance {
        match self {
            Covariance::Diagonal(var) => {
                Covariance::Diagonal(var.iter().map(|v| v + noise).collect())
            }
            Covariance::Full(m) => Covariance::Full(
                m.iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, v)| if i == j { v + noise } else { *v })
                            .collect()
                    })
                    .collect(),
            ),
        }
    }

    /// Posterior mean of an offset with this prior covariance, observed as
    /// `residual` under isotropic noise of variance `noise`:
    /// Σ (Σ + noise·I)⁻¹ r.
    pub fn shrink(&self, residual: &[f64], noise: f64) -> Vec<f64> {
        match self {
            Covariance::Diagonal(var) => residual
                .iter()
                .zip(var)
                .map(|(r, v)| r * v / (v + noise))
                .collect(),
            Covariance::Full(m) => {
                let n = m.len();
                let sigma = DMatrix::from_fn(n, n, |i, j| m[i][j]);
                let regular = &sigma + DMatrix::identity(n, n) * noise;
                let solved = regular
                    .cholesky()
                    .expect("positive definite")
                    .solve(&DVector::from_column_slice(residual));
                (sigma * solved).iter().copied().collect()
            }
        }
    }

    /// Maps a standard-normal vector to a draw from this covariance.
    pub fn transform_standard(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Covariance::Diagonal(var) => z.iter().zip(var).map(|(z, v)| z * v.sqrt()).collect(),
            Covariance::Full(m) => {
                let n = m.len();
                let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
                let l = mat.cholesky().expect("positive definite").l();
                (l * DVector::from_column_slice(z))
                    .iter()
                    .copied()
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
    pub weight: f64,
}

impl Component {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.covariance.log_density(&delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub max_iterations: usize,
    /// Stop once the per-iteration log-likelihood gain falls below this.
    pub tolerance: f64,
    /// Lower bound on covariance eigenvalues.
    pub min_variance: f64,
    pub full_covariance: bool,
    /// Independent k-means++ initialisations; the fit with the highest
    /// final log-likelihood is kept.
    pub restarts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            max_iterations: 200,
            tolerance: 1e-8,
            min_variance: 1e-6,
            full_covariance: false,
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub components: Vec<Component>,
    /// Data log-likelihood before the first and after every EM iteration.
    pub log_likelihood: Vec<f64>,
    /// Hard assignment of every sample under the final mixture.
    pub assignments: Vec<usize>,
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn fit_gmm(data: &[Vec<f64>], k: usize, cfg: &GmmConfig, seed: u64) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InsufficientData(
            "mixture needs at least one component".into(),
        ));
    }
    if data.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot support {k} components",
            data.len()
        )));
    }
    let dim = data[0].len();
    if data.iter().any(|x| x.len() != dim) {
        return Err(Error::InsufficientData(
            "samples have inconsistent dimension".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut best: Option<GmmFit> = None;
    for _ in 0..cfg.restarts.max(1) {
        let fit = fit_once(data, k, cfg, &mut rng);
        let ll = *fit.log_likelihood.last().expect("trace is never empty");
        if best
            .as_ref()
            .is_none_or(|b| ll > *b.log_likelihood.last().unwrap())
        {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_once(data: &[Vec<f64>], k: usize, cfg: &GmmConfig, rng: &mut crate::rng::Rng) -> GmmFit {
    let dim = data[0].len();
    let centers = kmeans_plus_plus(data, k, rng);

    let n = data.len() as f64;
    let global_mean: Vec<f64> = (0..dim)
        .map(|d| data.iter().map(|x| x[d]).sum::<f64>() / n)
        .collect();
    let global_var: Vec<f64> = (0..dim)
        .map(|d| {
            let v = data
                .iter()
                .map(|x| (x[d] - global_mean[d]).powi(2))
                .sum::<f64>()
                / n;
            v.max(cfg.min_variance)
        })
        .collect();
    let init_cov = if cfg.full_covariance {
        Covariance::Full(
            (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| if i == j { global_var[i] } else { 0.0 })
                        .collect()
                })
                .collect(),
        )
    } else {
        Covariance::Diagonal(global_var)
    };
    let mut components: Vec<Component> = centers
        .into_iter()
        .map(|c| Component {
            mean: data[c].clone(),
            covariance: init_cov.clone(),
            weight: 1.0 / k as f64,
        })
        .collect();

    let mut resp = vec![vec![0.0; k]; data.len()];
    let mut trace = Vec::new();
    let mut ll = e_step(data, &components, &mut resp);
    trace.push(ll);
    for _ in 0..cfg.max_iterations {
        m_step(data, &mut components, &resp, cfg);
        let next = e_step(data, &components, &mut resp);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain.abs() < cfg.tolerance * (1.0 + ll.abs()) {
            break;
        }
    }

    // empty components keep a vanishing weight so every weight stays in (0, 1]
    for c in &mut components {
        c.weight = c.weight.max(1e-12);
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= total;
    }
    let assignments = resp
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect();
    GmmFit {
        components,
        log_likelihood: trace,
        assignments,
    }
}

fn kmeans_plus_plus(data: &[Vec<f64>], k: usize, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut chosen = vec![rng.random_range(0..data.len())];
    let mut d2: Vec<f64> = data.iter().map(|x| sq(x, &data[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..data.len())
        };
        chosen.push(next);
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq(x, &data[next]));
        }
    }
    chosen
}

/// Fills responsibilities and returns the data log-likelihood.
fn e_step(data: &[Vec<f64>], comps: &[Component], resp: &mut [Vec<f64>]) -> f64 {
    let mut ll = 0.0;
    let mut logs = vec![0.0; comps.len()];
    for (x, r) in data.iter().zip(resp.iter_mut()) {
        for (j, c) in comps.iter().enumerate() {
            logs[j] = if c.weight > 0.0 {
                c.weight.ln() + c.log_density(x)
            } else {
                f64::NEG_INFINITY
            };
        }
        let lse = log_sum_exp(&logs);
        ll += lse;
        for (rj, &lj) in r.iter_mut().zip(&logs) {
            *rj = (lj - lse).exp();
        }
    }
    ll
}

fn m_step(data: &[Vec<f64>], comps: &mut [Component], resp: &[Vec<f64>], cfg: &GmmConfig) {
    let n = data.len() as f64;
    let dim = data[0].len();
    for (j, comp) in comps.iter_mut().enumerate() {
        let nk: f64 = resp.iter().map(|r| r[j]).sum();
        if nk < 1e-10 {
            comp.weight = 0.0;
            continue;
        }
        comp.weight = nk / n;
        let mean: Vec<f64> = (0..dim)
            .map(|d| data.iter().zip(resp).map(|(x, r)| r[j] * x[d]).sum::<f64>() / nk)
            .collect();
        comp.covariance = if cfg.full_covariance {
            let mut scatter = DMatrix::<f64>::zeros(dim, dim);
            for (x, r) in data.iter().zip(resp) {
                let dx = DVector::from_iterator(dim, x.iter().zip(&mean).map(|(a, b)| a - b));
                scatter += (&dx * dx.transpose()) * r[j];
            }
            scatter /= nk;
            let eig = nalgebra::SymmetricEigen::new(scatter);
            let clipped = eig.eigenvalues.map(|v| v.max(cfg.min_variance));
            let rebuilt =
                &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            Covariance::Full(
                (0..dim)
                    .map(|a| {
                        (0..dim)
                            .map(|b| 0.5 * (rebuilt[(a, b)] + rebuilt[(b, a)]))
                            .collect()
                    })
                    .collect(),
            )
        } else {
            Covariance::Diagonal(
                (0..dim)
                    .map(|d| {
                        let v = data
                            .iter()
                            .zip(resp)
                            .map(|(x, r)| r[j] * (x[d] - mean[d]).powi(2))
                            .sum::<f64>()
                            / nk;
                        v.max(cfg.min_variance)
                    })
                    .collect(),
            )
        };
        comp.mean = mean;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut out = Vec::new();
        for i in 0..200 {
            let c = if i % 2 == 0 { -3.0 } else { 3.0 };
            out.push(vec![c + noise.sample(&mut rng), noise.sample(&mut rng)]);
        }
        out
    }

    #[test]
    fn log_likelihood_never_decreases() {
        for full in [false, true] {
            let cfg = GmmConfig {
                full_covariance: full,
                ..GmmConfig::default()
            };
            let fit = fit_gmm(&blobs(3), 4, &cfg, 11).unwrap();
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn diagonal_and_full_shrinkage_agree() {
        let var = vec![0.5, 2.0, 0.1];
        let full = Covariance::Full(vec![
            vec![0.5, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 0.1],
        ]);
        let r = [1.0, -1.0, 0.3];
        let a = Covariance::Diagonal(var.clone()).shrink(&r, 0.1);
        let b = full.shrink(&r, 0.1);
        for ((x, y), (ri, v)) in a.iter().zip(&b).zip(r.iter().zip(&var)) {
            assert!((x - y).abs() < 1e-12);
            // scalar posterior mean v / (v + noise) · r
            assert!((x - ri * v / (v + 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_is_the_sample_mean() {
        let data = blobs(5);
        let fit = fit_gmm(&data, 1, &GmmConfig::default(), 1).unwrap();
        let mean_x = data.iter().map(|x| x[0]).sum::<f64>() / data.len() as f64;
        assert!((fit.components[0].mean[0] - mean_x).abs() < 1e-12);
    }

    #[test]
    fn full_and_diagonal_densities_agree_on_diagonal_matrices() {
        let diag = Covariance::Diagonal(vec![0.5, 2.0]);
        let full = Covariance::Full(vec![vec![0.5, 0.0], vec![0.0, 2.0]]);
        let x = [0.3, -1.1];
        assert!((diag.log_density(&x) - full.log_density(&x)).abs() < 1e-12);
    }

    #[test]
    fn too_many_components_is_an_error() {
        let err = fit_gmm(&[vec![0.0]], 2, &GmmConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn eigenvalue_floor_is_respected() {
        let data = vec![vec![1.0, 1.0]; 10];
        let fit = fit_gmm(&data, 1, &GmmConfig::default(), 0).unwrap();
        assert!(fit.components[0].covariance.min_eigenvalue() >= 1e-6 - 1e-18);
    }
}
