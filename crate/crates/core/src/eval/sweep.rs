use std::path::Path;

use plotters::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{LineSample, MixPolicy, Source, TextSource};
use crate::datasets::{
    build_pools, compose_lines, compose_test_lines, load_crops, load_library, select_scenario,
    text_source, PipelineConfig, PoolSet,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::{ser_corpus, EditCounts, PrototypeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub ser: f64,
    pub counts: EditCounts,
}

/// Pools for both sources and the held-out test lines, shared by every
/// ratio of a sweep.
pub struct SweepSetup {
    pub cfg: PipelineConfig,
    pub pools: PoolSet,
    pub text: TextSource,
    pub test: Vec<LineSample>,
}

impl SweepSetup {
    pub fn prepare(cfg: &PipelineConfig) -> Result<SweepSetup> {
        cfg.validate()?;
        let crops = load_crops(cfg)?;
        let scenario = select_scenario(&crops, cfg.scenario, cfg.seed);
        let test = compose_test_lines(&scenario.held_out, cfg)?;
        let lib = load_library(cfg)?;
        let pools = build_pools(
            &scenario.selected,
            Some(&lib),
            cfg,
            &[Source::Bpl, Source::RealAug],
        )?;
        let text = text_source(cfg, scenario.selected.keys().cloned().collect())?;
        Ok(SweepSetup {
            cfg: cfg.clone(),
            pools,
            text,
            test,
        })
    }

    /// The training set a `mix` run at `rho` would build.
    pub fn train_lines(&self, rho: f64) -> Result<Vec<LineSample>> {
        let mix = MixPolicy {
            rho,
            ..self.cfg.mix
        };
        mix.validate()?;
        compose_lines(&self.pools, &self.cfg, &mix, &self.text)
    }

    /// Fits prototypes on the training set at `rho` and scores the test set.
    pub fn evaluate(&self, rho: f64) -> Result<SweepRow> {
        let train = self.train_lines(rho)?;
        let model = PrototypeModel::from_lines(
            &train,
            self.cfg.recognizer.clone(),
            derive_seed(self.cfg.seed, "prototypes", 0),
        )?;
        let images: Vec<_> = self.test.iter().map(|l| l.image.clone()).collect();
        let hyps = model.decode_all(&images)?;
        let pairs: Vec<_> = hyps
            .into_iter()
            .zip(self.test.iter().map(|l| l.transcription.clone()))
            .collect();
        let (ser, counts) = ser_corpus(&pairs)?;
        Ok(SweepRow { rho, ser, counts })
    }
}

/// SER of the prototype recognizer trained at each mixing ratio, in the
/// order given.
pub fn sweep_mix(cfg: &PipelineConfig, ratios: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::config("ratios", format!("{r} is outside [0, 1]")));
    }
    let setup = SweepSetup::prepare(cfg)?;
    ratios.par_iter().map(|&rho| setup.evaluate(rho)).collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = [
        "rho",
        "ser",
        "substitutions",
        "deletions",
        "insertions",
        "ref_len",
    ];
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        let c = r.counts;
        w.write_record([
            format!("{:.4}", r.rho),
            format!("{:.6}", r.ser),
            c.substitutions.to_string(),
            c.deletions.to_string(),
            c.insertions.to_string(),
            c.ref_len.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// SER against rho as a PNG line plot. The axes run over [0, 1] in rho and
/// [0, max(1, SER)] with grid lines every tenth; there is no text.
pub fn plot_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let plot_err = |e: String| Error::io(path, std::io::Error::other(e));
    let top = rows.iter().map(|r| r.ser).fold(1.0f64, f64::max);
    let root = BitMapBackend::new(path, (640, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(24)
        .build_cartesian_2d(0f64..1f64, 0f64..top)
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_labels(11)
        .y_labels(11)
        .x_label_formatter(&|_| String::new())
        .y_label_formatter(&|_| String::new())
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.rho, r.ser)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    chart
        .draw_series(LineSeries::new(pts.clone(), BLUE.stroke_width(2)))
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .draw_series(pts.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))
        .map_err(|e| plot_err(e.to_string()))?;
    root.present().map_err(|e| plot_err(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<SweepRow> {
        [(0.0, 0.4), (0.5, 0.2), (1.0, 0.3)]
            .map(|(rho, ser)| SweepRow {
                rho,
                ser,
                counts: EditCounts {
                    substitutions: 1,
                    ref_len: 5,
                    ..Default::default()
                },
            })
            .to_vec()
    }

    #[test]
    fn table_and_plot_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("sweep.csv");
        write_sweep_csv(&csv_path, &rows()).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(2).unwrap(), "0.5000,0.200000,1,0,0,5");
        let png = dir.path().join("sweep.png");
        plot_sweep(&png, &rows()).unwrap();
        let img = crate::image::GlyphImage::load_png(&png).unwrap();
        assert_eq!((img.width(), img.height()), (640, 400));
    }

    #[test]
    fn ratios_outside_the_unit_interval_are_rejected() {
        let err = sweep_mix(&PipelineConfig::default(), &[0.5, 1.2])
            .err()
            .unwrap();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "ratios"));
    }
}
