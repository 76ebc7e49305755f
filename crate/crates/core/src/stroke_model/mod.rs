//! Type-level generative model: primitives, counts, relations and programs.

pub mod corpus;
pub mod gmm;
mod library;
mod program;
mod substroke;

pub use corpus::{fit_library_from_corpus, OnlineGlyph};
pub use gmm::{Covariance, GmmConfig};
pub use library::{
    fit_count_models, fit_primitive_library, CountModel, LibraryConfig, PositionPrior, Primitive,
    PrimitiveLibrary, TransitionModel, LIBRARY_FORMAT,
};
pub use program::{sample_program, score_program, Part, Relation, SymbolProgram, RELATION_KINDS};
pub use substroke::{flatten, normalize_substroke, unflatten, SubStroke};

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::error::Error;
    use crate::geometry::Point;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn straight(n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| Point::new(-0.5 + i as f64 / (n - 1) as f64, 0.0))
            .collect()
    }

    fn hook(n: usize) -> Vec<Point> {
        // right angle: across, then down
        let half = n / 2;
        let mut raw: Vec<Point> = (0..=half).map(|i| Point::new(i as f64, 0.0)).collect();
        raw.extend((1..=half).map(|i| Point::new(half as f64, i as f64)));
        raw
    }

    fn noisy(raw: &[Point], sigma: f64, rng: &mut crate::rng::Rng) -> Vec<Point> {
        let noise = Normal::new(0.0, sigma).unwrap();
        raw.iter()
            .map(|p| Point::new(p.x + noise.sample(rng), p.y + noise.sample(rng)))
            .collect()
    }

    fn two_cluster_corpus() -> (Vec<SubStroke>, Vec<Vec<f64>>) {
        let mut rng = rng_from_seed(42);
        let mut strokes = Vec::new();
        for i in 0..100 {
            let base: Vec<Point> = if i % 2 == 0 {
                straight(20).iter().map(|p| *p * 20.0).collect()
            } else {
                hook(20)
            };
            strokes.push(normalize_substroke(&noisy(&base, 0.05, &mut rng), 10).unwrap());
        }
        // centroids computed straight from the data, the oracle for EM
        let centroid = |parity: usize| -> Vec<f64> {
            let members: Vec<_> = strokes.iter().skip(parity).step_by(2).collect();
            (0..20)
                .map(|d| members.iter().map(|s| s.flatten()[d]).sum::<f64>() / members.len() as f64)
                .collect()
        };
        let centroids = vec![centroid(0), centroid(1)];
        (strokes, centroids)
    }

    pub(crate) fn toy_library(k: usize) -> PrimitiveLibrary {
        let cfg = LibraryConfig {
            num_primitives: k,
            ..LibraryConfig::default()
        };
        let primitives = (0..k)
            .map(|i| Primitive {
                mean_trajectory: straight(10)
                    .into_iter()
                    .map(|p| p.rotate(i as f64 * 0.7))
                    .collect(),
                covariance: Covariance::Diagonal(vec![1e-3; 20]),
                weight: 1.0 / k as f64,
                log_scale_mean: 20f64.ln(),
                log_scale_std: 0.2,
            })
            .collect();
        PrimitiveLibrary {
            format: LIBRARY_FORMAT,
            config: cfg.clone(),
            primitives,
            count_model: CountModel::uniform(cfg.kappa_max, cfg.n_max),
            transition_model: TransitionModel::uniform(k),
        }
    }

    fn single_part(prims: &[usize]) -> Part {
        Part {
            primitives: prims.to_vec(),
            offsets: vec![vec![0.0; 20]; prims.len()],
            scales: vec![20.0; prims.len()],
        }
    }

    #[test]
    fn em_recovers_two_clusters() {
        let (strokes, centroids) = two_cluster_corpus();
        let lib = fit_primitive_library(&strokes, 2, &LibraryConfig::default(), 7).unwrap();
        for c in &centroids {
            let best = lib
                .primitives
                .iter()
                .map(|p| {
                    let m = p.flat_mean();
                    (m.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 20.0).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.05, "rms distance {best}");
        }
        let w: f64 = lib.primitives.iter().map(|p| p.weight).sum();
        assert!((w - 1.0).abs() < 1e-9);
        lib.validate().unwrap();
    }

    #[test]
    fn library_fit_is_deterministic() {
        let (strokes, _) = two_cluster_corpus();
        let a = fit_primitive_library(&strokes, 3, &LibraryConfig::default(), 9).unwrap();
        let b = fit_primitive_library(&strokes, 3, &LibraryConfig::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn one_primitive_mean_is_the_sample_mean() {
        let (strokes, _) = two_cluster_corpus();
        let lib = fit_primitive_library(&strokes, 1, &LibraryConfig::default(), 0).unwrap();
        let mean: Vec<f64> = (0..20)
            .map(|d| strokes.iter().map(|s| s.flatten()[d]).sum::<f64>() / strokes.len() as f64)
            .collect();
        for (a, b) in lib.primitives[0].flat_mean().iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn library_needs_enough_samples() {
        let (strokes, _) = two_cluster_corpus();
        let err = fit_primitive_library(&strokes[..2], 3, &LibraryConfig::default(), 0);
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let (strokes, _) = two_cluster_corpus();
        let lib = fit_primitive_library(&strokes, 2, &LibraryConfig::default(), 1).unwrap();
        let back = PrimitiveLibrary::from_json(&lib.to_json()).unwrap();
        assert_eq!(back, lib);
    }

    #[test]
    fn kappa_smoothing_is_add_one() {
        let lib = toy_library(2);
        let psi = SymbolProgram {
            parts: vec![single_part(&[0]); 2],
            relations: vec![
                Relation::Independent {
                    position: Point::new(50.0, 50.0),
                },
                Relation::AtEnd { target: 0 },
            ],
        };
        let corpus = vec![psi; 10];
        let (counts, _) = fit_count_models(&corpus, &lib).unwrap();
        let kmax = lib.config.kappa_max as f64;
        assert!((counts.kappa_prob(2) - 11.0 / (10.0 + kmax)).abs() < 1e-12);
        assert!((counts.p_kappa.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dominant_transition_gets_the_most_mass() {
        let lib = toy_library(4);
        let psi = SymbolProgram {
            parts: vec![single_part(&[1, 3, 1, 3])],
            relations: vec![Relation::Independent {
                position: Point::ORIGIN,
            }],
        };
        let (_, trans) = fit_count_models(&vec![psi; 5], &lib).unwrap();
        let row = &trans.rows[1];
        let argmax = (0..4).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, 3);
    }

    #[test]
    fn uniform_transitions_converge_to_one_fifth() {
        let lib = toy_library(5);
        let mut rng = rng_from_seed(4);
        // parts of 4 sub-parts until 10 000 transitions are collected
        let mut programs = Vec::new();
        let mut transitions = 0;
        while transitions < 10_000 {
            let prims: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
            transitions += 3;
            programs.push(SymbolProgram {
                parts: vec![single_part(&prims)],
                relations: vec![Relation::Independent {
                    position: Point::ORIGIN,
                }],
            });
        }
        // count oracle
        let mut counts = [[0usize; 5]; 5];
        for p in &programs {
            for w in p.parts[0].primitives.windows(2) {
                counts[w[0]][w[1]] += 1;
            }
        }
        let (_, trans) = fit_count_models(&programs, &lib).unwrap();
        for a in 0..5 {
            let total: usize = counts[a].iter().sum();
            for b in 0..5 {
                let oracle = (counts[a][b] + 1) as f64 / (total + 5) as f64;
                assert!((trans.rows[a][b] - oracle).abs() < 1e-12);
                assert!((trans.rows[a][b] - 0.2).abs() < 0.02);
            }
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            fit_count_models(&[], &toy_library(1)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn degenerate_library_score_matches_hand_computation() {
        let mut lib = toy_library(1);
        lib.count_model.p_kappa = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        lib.count_model.p_n_given_kappa[0] = vec![1.0, 0.0, 0.0, 0.0];
        lib.config.position_prior = PositionPrior::Uniform {
            min: Point::new(0.0, 0.0),
            max: Point::new(1.0, 1.0),
        };
        let psi = SymbolProgram {
            parts: vec![Part {
                primitives: vec![0],
                offsets: vec![vec![0.0; 20]],
                scales: vec![20.0],
            }],
            relations: vec![Relation::Independent {
                position: Point::new(0.5, 0.5),
            }],
        };
        // hand evaluation: 20 independent coordinates with variance 1e-3 at
        // their mean, log-normal scale at its median, unit-area position cell
        let shape = -0.5 * 20.0 * ((2.0 * std::f64::consts::PI).ln() + 1e-3f64.ln());
        let scale = -(0.2f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let expected = 0.0 + shape + scale + 0.0;
        let got = score_program(&psi, &lib).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert_eq!(got, score_program(&psi, &lib).unwrap());
    }

    #[test]
    fn invalid_index_is_reported() {
        let lib = toy_library(2);
        let psi = SymbolProgram {
            parts: vec![single_part(&[5])],
            relations: vec![Relation::Independent {
                position: Point::ORIGIN,
            }],
        };
        assert!(matches!(
            score_program(&psi, &lib),
            Err(Error::InvalidProgram(_))
        ));
    }

    #[test]
    fn forced_library_samples_single_stroke_programs() {
        let mut lib = toy_library(1);
        lib.count_model.p_kappa = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        lib.count_model.p_n_given_kappa[0] = vec![1.0, 0.0, 0.0, 0.0];
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            let psi = sample_program(&lib, &mut rng);
            assert_eq!(psi.kappa(), 1);
            assert_eq!(psi.parts[0].primitives, vec![0]);
        }
    }

    #[test]
    fn kappa_frequencies_follow_the_count_model() {
        let mut lib = toy_library(3);
        lib.count_model.p_kappa = vec![0.5, 0.3, 0.2, 0.0, 0.0, 0.0];
        let mut rng = rng_from_seed(77);
        let mut freq = [0usize; 3];
        for _ in 0..10_000 {
            let psi = sample_program(&lib, &mut rng);
            assert!(matches!(psi.relations[0], Relation::Independent { .. }));
            psi.validate(&lib).unwrap();
            assert!(score_program(&psi, &lib).unwrap().is_finite());
            freq[psi.kappa() - 1] += 1;
        }
        for (f, p) in freq.iter().zip([0.5, 0.3, 0.2]) {
            assert!((*f as f64 / 10_000.0 - p).abs() < 0.02);
        }
    }

    #[test]
    fn sampled_relations_outscore_redrawn_ones() {
        let lib = toy_library(3);
        let mut rng = rng_from_seed(5);
        let mut sampled = 0.0;
        let mut redrawn = 0.0;
        let canvas = lib.config.canvas as f64;
        for _ in 0..1000 {
            let psi = sample_program(&lib, &mut rng);
            sampled += score_program(&psi, &lib).unwrap();
            let mut alt = psi.clone();
            for (i, rel) in alt.relations.iter_mut().enumerate() {
                // uniform re-draw over kinds and over the whole canvas
                let pos = Point::new(rng.random::<f64>() * canvas, rng.random::<f64>() * canvas);
                *rel = match if i == 0 { 0 } else { rng.random_range(0..4) } {
                    0 => Relation::Independent { position: pos },
                    1 => Relation::AtStart {
                        target: rng.random_range(0..i),
                    },
                    2 => Relation::AtEnd {
                        target: rng.random_range(0..i),
                    },
                    _ => Relation::Along {
                        target: rng.random_range(0..i),
                        tau: rng.random(),
                    },
                };
            }
            redrawn += score_program(&alt, &lib).unwrap();
        }
        assert!(sampled > redrawn, "{sampled} <= {redrawn}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let lib = toy_library(4);
        let a = sample_program(&lib, &mut rng_from_seed(8));
        let b = sample_program(&lib, &mut rng_from_seed(8));
        assert_eq!(a, b);
    }
}
