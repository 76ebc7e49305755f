//! `bplgen`: one-shot glyph generation, synthetic line datasets and SER
//! evaluation from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bplgen_core::compose::{MixMode, Source};
use bplgen_core::datasets::{
    build_composed, build_mixed, ingest, regenerate, sha256_hex, verify_dataset, write_dataset,
    DatasetOrigin, LibrarySource, PipelineConfig, FORMAT_VERSION,
};
use bplgen_core::eval::{plot_sweep, ser_corpus, sweep_mix, write_sweep_csv};
use bplgen_core::generator::{contact_sheet, generate_from_parses, Preset};
use bplgen_core::parser::{binarize, parse_glyph};
use bplgen_core::procedural::{stroke_corpus, ProceduralConfig};
use bplgen_core::rng::derive_rng;
use bplgen_core::stroke_model::{fit_library_from_corpus, OnlineGlyph, PrimitiveLibrary};
use bplgen_core::{Error, ErrorKind, GlyphImage, Result};

#[derive(Parser)]
#[command(
    name = "bplgen",
    version,
    about = "Stroke-program glyph generation and synthetic line datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (JSON); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct Seeded {
    #[command(flatten)]
    common: Common,
    /// Master seed for every random draw.
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Bpl,
    RealAug,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Homl,
    Hetl,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a primitive library on a stroke corpus.
    Fit {
        #[command(flatten)]
        s: Seeded,
        /// JSON list of online glyphs; a procedural corpus when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Size of the procedural corpus.
        #[arg(long, default_value_t = 300)]
        glyphs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a glyph image and print its ranked parses as JSON.
    Parse {
        #[command(flatten)]
        s: Seeded,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        library: Option<PathBuf>,
        /// Write the parses here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate new exemplars of one glyph.
    Gen {
        #[command(flatten)]
        s: Seeded,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        library: Option<PathBuf>,
        /// zero, subtle, default or wild.
        #[arg(long)]
        preset: Option<String>,
        /// Also write a contact sheet: the input followed by the exemplars.
        #[arg(long)]
        grid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classic augmentation of one glyph.
    Augment {
        #[command(flatten)]
        s: Seeded,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 9)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compose lines from a directory of class-labelled symbol images.
    Compose {
        #[command(flatten)]
        s: Seeded,
        /// `<dir>/<class>/<name>.png`
        #[arg(long)]
        symbols: PathBuf,
        #[arg(long, value_enum, default_value_t = SourceArg::RealAug)]
        source: SourceArg,
        #[arg(long)]
        lines: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a mixed BPL / augmented-real line dataset.
    Mix {
        #[command(flatten)]
        s: Seeded,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        lines: Option<usize>,
        /// Real exemplars per class.
        #[arg(long)]
        scenario: Option<usize>,
        /// Directory of real crops, `<dir>/<class>/<name>.png`.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Symbol error rate of hypothesis lines against reference lines.
    Eval {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// SER of the prototype recognizer across mixing ratios.
    Sweep {
        #[command(flatten)]
        s: Seeded,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        ratios: Vec<f64>,
        #[arg(long)]
        scenario: Option<usize>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the demo alphabet's real crops as a class directory tree.
    Demo {
        #[command(flatten)]
        s: Seeded,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a dataset's files against its manifest.
    Verify {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Rebuild a dataset from its manifest and compare checksums.
    Regen {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    match &common.config {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

/// Config with the seed flag applied to every stream.
fn seeded_config(s: &Seeded) -> Result<PipelineConfig> {
    let mut cfg = load_config(&s.common)?;
    cfg.seed = s.seed;
    cfg.generation.seed = s.seed;
    Ok(cfg)
}

fn set_library(cfg: &mut PipelineConfig, library: &Option<PathBuf>) {
    if let Some(path) = library {
        cfg.library = LibrarySource::File { path: path.clone() };
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Manifest of a directory of individually generated glyph images.
#[derive(Serialize)]
struct GlyphManifest<'a> {
    format: u32,
    command: &'a str,
    input: String,
    input_sha256: String,
    config: &'a PipelineConfig,
    outputs: Vec<GlyphRecord>,
}

#[derive(Serialize)]
struct GlyphRecord {
    path: String,
    sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    parse_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    token_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    augment: Option<bplgen_core::augment::Transform>,
}

fn input_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(
        &std::fs::read(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn save_output(dir: &Path, name: String, img: &GlyphImage) -> Result<GlyphRecord> {
    let bytes = img.to_png_bytes();
    write_file(&dir.join(&name), &bytes)?;
    Ok(GlyphRecord {
        path: name,
        sha256: sha256_hex(&bytes),
        parse_index: None,
        token_seed: None,
        augment: None,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            s,
            corpus,
            glyphs,
            out,
        } => {
            let cfg = seeded_config(&s)?;
            let corpus: Vec<OnlineGlyph> = match corpus {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_str(&text)?
                }
                None => {
                    let pc = ProceduralConfig {
                        canvas: cfg.library_config.canvas,
                        ..ProceduralConfig::default()
                    };
                    stroke_corpus(glyphs, &pc, s.seed)
                }
            };
            let lib = fit_library_from_corpus(&corpus, &cfg.library_config, s.seed)?;
            lib.save(&out)?;
            println!(
                "fitted {} primitives on {} glyphs -> {}",
                lib.primitives.len(),
                corpus.len(),
                out.display()
            );
        }
        Command::Parse {
            s,
            input,
            library,
            out,
        } => {
            let mut cfg = seeded_config(&s)?;
            set_library(&mut cfg, &library);
            let lib = bplgen_core::datasets::load_library(&cfg)?;
            let img = GlyphImage::load_png(&input)?;
            let parses = parse_glyph(
                &img,
                &lib,
                &cfg.generation.parser,
                &mut derive_rng(s.seed, "parse", 0),
            )?;
            let text = serde_json::to_string_pretty(&parses)?;
            match out {
                Some(path) => write_file(&path, text.as_bytes())?,
                None => {
                    use std::io::Write;
                    let mut stdout = std::io::stdout().lock();
                    // a closed pipe (`| head`) is not an error
                    match writeln!(stdout, "{text}") {
                        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                            return Err(Error::io("<stdout>", e))
                        }
                        _ => {}
                    }
                }
            }
        }
        Command::Gen {
            s,
            input,
            n,
            library,
            preset,
            grid,
            out,
        } => {
            let mut cfg = seeded_config(&s)?;
            set_library(&mut cfg, &library);
            if let Some(n) = n {
                cfg.generation.n = n;
            }
            if let Some(p) = preset {
                cfg.generation = cfg.generation.with_preset(Preset::parse(&p)?);
            }
            cfg.validate()?;
            let lib: PrimitiveLibrary = bplgen_core::datasets::load_library(&cfg)?;
            let img = GlyphImage::load_png(&input)?;
            let mut rng = derive_rng(s.seed, "gen", 0);
            let parses = parse_glyph(&img, &lib, &cfg.generation.parser, &mut rng)?;
            let exemplars =
                generate_from_parses(&parses, cfg.generation.n, &lib, &cfg.generation, &mut rng)?;
            create_dir(&out)?;
            let mut outputs = Vec::new();
            for (i, e) in exemplars.iter().enumerate() {
                let mut rec = save_output(&out, format!("exemplar_{i:03}.png"), &e.image)?;
                rec.parse_index = Some(e.parse_index);
                rec.token_seed = Some(e.token_seed);
                outputs.push(rec);
            }
            if grid {
                let p = &cfg.generation.parser;
                let seed_img = binarize(
                    &binarize(&img, p.threshold).fit_to_canvas(p.canvas, p.margin),
                    Some(0.5),
                );
                let mut tiles = vec![seed_img];
                tiles.extend(exemplars.iter().map(|e| e.image.clone()));
                let cols = (tiles.len() as f64).sqrt().ceil() as usize;
                outputs.push(save_output(
                    &out,
                    "grid.png".into(),
                    &contact_sheet(&tiles, cols, 4)?,
                )?);
            }
            let m = GlyphManifest {
                format: FORMAT_VERSION,
                command: "gen",
                input: input.display().to_string(),
                input_sha256: input_digest(&input)?,
                config: &cfg,
                outputs,
            };
            write_json(&out.join("manifest.json"), &m)?;
            println!("wrote {} exemplars to {}", exemplars.len(), out.display());
        }
        Command::Augment { s, input, n, out } => {
            let cfg = seeded_config(&s)?;
            cfg.augment.validate()?;
            let p = &cfg.generation.parser;
            let img = binarize(&GlyphImage::load_png(&input)?, p.threshold);
            let mut rng = derive_rng(s.seed, "augment", 0);
            create_dir(&out)?;
            let mut outputs = Vec::new();
            for i in 0..n {
                let t = cfg.augment.sample(&mut rng);
                let mut rec = save_output(&out, format!("augmented_{i:03}.png"), &t.apply(&img)?)?;
                rec.augment = Some(t);
                outputs.push(rec);
            }
            let m = GlyphManifest {
                format: FORMAT_VERSION,
                command: "augment",
                input: input.display().to_string(),
                input_sha256: input_digest(&input)?,
                config: &cfg,
                outputs,
            };
            write_json(&out.join("manifest.json"), &m)?;
            println!("wrote {n} augmented copies to {}", out.display());
        }
        Command::Compose {
            s,
            symbols,
            source,
            lines,
            out,
        } => {
            let mut cfg = seeded_config(&s)?;
            if let Some(l) = lines {
                cfg.lines = l;
            }
            cfg.validate()?;
            let source = match source {
                SourceArg::Bpl => Source::Bpl,
                SourceArg::RealAug => Source::RealAug,
            };
            let p = &cfg.generation.parser;
            let crops = ingest(&symbols, p.threshold, p.canvas, p.margin)?;
            let ds = build_composed(&crops, source, &cfg)?;
            let origin = DatasetOrigin::Compose {
                input: symbols.clone(),
                source,
            };
            let m = write_dataset(&out, &origin, &ds, &cfg)?;
            println!("wrote {} lines to {}", m.lines.len(), out.display());
        }
        Command::Mix {
            s,
            mode,
            rho,
            lines,
            scenario,
            input,
            library,
            out,
        } => {
            let mut cfg = seeded_config(&s)?;
            set_library(&mut cfg, &library);
            if let Some(m) = mode {
                cfg.mix.mode = match m {
                    ModeArg::Homl => MixMode::HomL,
                    ModeArg::Hetl => MixMode::HetL,
                };
            }
            if let Some(r) = rho {
                cfg.mix.rho = r;
            }
            if let Some(l) = lines {
                cfg.lines = l;
            }
            if let Some(k) = scenario {
                cfg.scenario = k;
            }
            if let Some(dir) = input {
                cfg.source = bplgen_core::datasets::GlyphSource::Directory { path: dir };
            }
            let ds = build_mixed(&cfg)?;
            for c in &ds.scenario.short_classes {
                eprintln!(
                    "warning: class {c} has fewer than {} exemplars",
                    cfg.scenario
                );
            }
            let m = write_dataset(&out, &DatasetOrigin::Mix, &ds, &cfg)?;
            let pure = |src: Source| {
                m.lines
                    .iter()
                    .filter(|l| l.sources.iter().all(|&t| t == src))
                    .count()
            };
            println!(
                "wrote {} lines to {}: {} bpl, {} real_aug, {} mixed",
                m.lines.len(),
                out.display(),
                pure(Source::Bpl),
                pure(Source::RealAug),
                m.lines.len() - pure(Source::Bpl) - pure(Source::RealAug)
            );
        }
        Command::Eval { hyp, reference } => {
            let read = |p: &Path| -> Result<Vec<Vec<String>>> {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(text
                    .lines()
                    .map(|l| l.split_whitespace().map(str::to_string).collect())
                    .collect())
            };
            let (h, r) = (read(&hyp)?, read(&reference)?);
            if h.len() != r.len() {
                return Err(Error::InsufficientData(format!(
                    "{} hypothesis lines but {} reference lines",
                    h.len(),
                    r.len()
                )));
            }
            let pairs: Vec<_> = h.into_iter().zip(r).collect();
            let (rate, c) = ser_corpus(&pairs)?;
            println!(
                "SER {rate:.3} (S={} D={} I={} N={}, {} lines)",
                c.substitutions,
                c.deletions,
                c.insertions,
                c.ref_len,
                pairs.len()
            );
        }
        Command::Sweep {
            s,
            ratios,
            scenario,
            input,
            library,
            out,
        } => {
            let mut cfg = seeded_config(&s)?;
            set_library(&mut cfg, &library);
            if let Some(k) = scenario {
                cfg.scenario = k;
            }
            if let Some(dir) = input {
                cfg.source = bplgen_core::datasets::GlyphSource::Directory { path: dir };
            }
            let rows = sweep_mix(&cfg, &ratios)?;
            create_dir(&out)?;
            let csv_path = out.join("sweep.csv");
            let png_path = out.join("sweep.png");
            write_sweep_csv(&csv_path, &rows)?;
            plot_sweep(&png_path, &rows)?;
            #[derive(Serialize)]
            struct SweepManifest<'a> {
                format: u32,
                config: &'a PipelineConfig,
                ratios: &'a [f64],
                files: Vec<bplgen_core::datasets::FileEntry>,
            }
            let mut files = Vec::new();
            for (name, path) in [("sweep.csv", &csv_path), ("sweep.png", &png_path)] {
                files.push(bplgen_core::datasets::FileEntry {
                    path: name.into(),
                    sha256: input_digest(path)?,
                });
            }
            write_json(
                &out.join("manifest.json"),
                &SweepManifest {
                    format: FORMAT_VERSION,
                    config: &cfg,
                    ratios: &ratios,
                    files,
                },
            )?;
            println!("rho,ser");
            for r in &rows {
                println!("{:.2},{:.4}", r.rho, r.ser);
            }
        }
        Command::Demo { s, out } => {
            let cfg = seeded_config(&s)?;
            let crops = bplgen_core::datasets::load_crops(&cfg)?;
            let mut total = 0;
            for (class, list) in &crops {
                create_dir(&out.join(class))?;
                for c in list {
                    c.image
                        .save_png(out.join(class).join(format!("{}.png", c.name)))?;
                    total += 1;
                }
            }
            println!(
                "wrote {total} crops in {} classes to {}",
                crops.len(),
                out.display()
            );
        }
        Command::Verify { dataset } => {
            let m = verify_dataset(&dataset)?;
            println!("ok: {} files match their checksums", m.files.len());
        }
        Command::Regen { dataset, out } => {
            let m = regenerate(&dataset, &out)?;
            println!(
                "ok: regenerated {} files, all checksums match",
                m.files.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Runtime => 4,
            })
        }
    }
}
