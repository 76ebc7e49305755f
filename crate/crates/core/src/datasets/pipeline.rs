use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::Transform;
use crate::compose::{
    build_dataset, LineSample, MixMode, MixPolicy, Source, SymbolPools, TextSource,
};
use crate::error::{Error, Result};
use crate::generator::{generate_from_parses, InkModel};
use crate::image::GlyphImage;
use crate::parser::{binarize, parse_glyph};
use crate::procedural::{
    class_name, demo_alphabet, demo_library, render_online, writer_variant, ProceduralConfig,
};
use crate::rng::{derive_rng, derive_seed};
use crate::stroke_model::PrimitiveLibrary;

use super::config::{GlyphSource, LibrarySource, PipelineConfig};

/// A real crop and the name it was loaded under.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub name: String,
    pub image: GlyphImage,
}

/// Real crops per class id, in name order.
pub type CropSet = BTreeMap<String, Vec<Crop>>;

/// Loads `<dir>/<class>/<name>.png`, binarizing each crop and fitting its
/// ink onto a `canvas`-sized square with `margin` blank pixels.
pub fn ingest(dir: &Path, threshold: Option<f32>, canvas: usize, margin: usize) -> Result<CropSet> {
    let mut classes = CropSet::new();
    for class_dir in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let class = class_dir
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned();
        let mut crops = Vec::new();
        for file in sorted_entries(&class_dir)? {
            if file
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            {
                let img = GlyphImage::load_png(&file)?;
                crops.push(Crop {
                    name: file.file_stem().unwrap().to_string_lossy().into_owned(),
                    image: binarize(
                        &binarize(&img, threshold).fit_to_canvas(canvas, margin),
                        Some(0.5),
                    ),
                });
            }
        }
        if crops.is_empty() {
            return Err(Error::MissingClass(class_dir));
        }
        classes.insert(class, crops);
    }
    if classes.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no class directories under {}",
            dir.display()
        )));
    }
    Ok(classes)
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// `instances` writer variants of each glyph of a procedural alphabet.
pub fn demo_crops(
    classes: usize,
    instances: usize,
    seed: u64,
    max_iou: f64,
    writer: &crate::procedural::WriterNoise,
) -> Result<CropSet> {
    let cfg = ProceduralConfig::default();
    let ink = InkModel::default();
    let alphabet = demo_alphabet(classes, &cfg, &ink, seed, max_iou)?;
    let mut out = CropSet::new();
    for (i, (glyph, _)) in alphabet.iter().enumerate() {
        let class = class_name(i);
        let crops = (0..instances)
            .map(|j| {
                let v = writer_variant(
                    glyph,
                    writer,
                    &mut derive_rng(seed, &format!("writer/{class}"), j as u64),
                );
                Ok(Crop {
                    name: format!("w{j:02}"),
                    image: render_online(&v, &ink, cfg.canvas)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(class, crops);
    }
    Ok(out)
}

pub fn load_crops(cfg: &PipelineConfig) -> Result<CropSet> {
    let p = &cfg.generation.parser;
    let all = match &cfg.source {
        GlyphSource::Demo {
            classes,
            instances,
            seed,
            max_iou,
            writer,
        } => demo_crops(*classes, *instances, *seed, *max_iou, writer)?,
        GlyphSource::Directory { path } => ingest(path, p.threshold, p.canvas, p.margin)?,
    };
    restrict(all, &cfg.alphabet)
}

fn restrict(mut all: CropSet, alphabet: &[String]) -> Result<CropSet> {
    if alphabet.is_empty() {
        return Ok(all);
    }
    alphabet
        .iter()
        .map(|c| {
            all.remove_entry(c).ok_or_else(|| {
                Error::config("alphabet", format!("class {c} not provided by the source"))
            })
        })
        .collect()
}

pub fn load_library(cfg: &PipelineConfig) -> Result<PrimitiveLibrary> {
    match &cfg.library {
        LibrarySource::Demo { glyphs, seed } => demo_library(&cfg.library_config, *glyphs, *seed),
        LibrarySource::File { path } => PrimitiveLibrary::load(path),
    }
}

/// Crops used for training and the rest, with the classes that had fewer
/// than `k` crops.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub selected: CropSet,
    pub held_out: CropSet,
    pub short_classes: Vec<String>,
}

/// Picks `k` crops per class by a seeded shuffle; classes with fewer keep
/// all of theirs and are reported.
pub fn select_scenario(crops: &CropSet, k: usize, seed: u64) -> Scenario {
    let mut s = Scenario {
        selected: CropSet::new(),
        held_out: CropSet::new(),
        short_classes: Vec::new(),
    };
    for (class, list) in crops {
        if list.len() < k {
            s.short_classes.push(class.clone());
        }
        let mut order: Vec<usize> = (0..list.len()).collect();
        order.shuffle(&mut derive_rng(seed, &format!("scenario/{class}"), 0));
        let (pick, rest) = order.split_at(k.min(list.len()));
        let mut pick = pick.to_vec();
        pick.sort_unstable();
        let mut rest = rest.to_vec();
        rest.sort_unstable();
        s.selected.insert(
            class.clone(),
            pick.iter().map(|&i| list[i].clone()).collect(),
        );
        s.held_out.insert(
            class.clone(),
            rest.iter().map(|&i| list[i].clone()).collect(),
        );
    }
    s
}

/// How one pool entry was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub id: String,
    pub class: String,
    pub source: Source,
    /// Name of the real crop it derives from.
    pub seed_glyph: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augment: Option<Transform>,
}

/// Symbol pools and the provenance of every entry, aligned by index.
#[derive(Debug, Clone, Default)]
pub struct PoolSet {
    pub pools: SymbolPools,
    pub records: BTreeMap<(String, Source), Vec<SymbolRecord>>,
}

impl PoolSet {
    fn add(&mut self, class: &str, source: Source, items: Vec<(GlyphImage, SymbolRecord)>) {
        for (img, mut rec) in items {
            let list = self.records.entry((class.to_string(), source)).or_default();
            rec.id = format!("{source}/{class}/{}", list.len());
            list.push(rec);
            self.pools.insert(class, source, img);
        }
    }

    /// Pool of unmodified crops, all tagged `source`.
    pub fn from_crops(crops: &CropSet, source: Source) -> PoolSet {
        let mut set = PoolSet::default();
        for (class, list) in crops {
            let items = list
                .iter()
                .map(|c| (c.image.clone(), record(class, source, &c.name)))
                .collect();
            set.add(class, source, items);
        }
        set
    }

    pub fn record(&self, class: &str, source: Source, index: usize) -> Option<&SymbolRecord> {
        self.records.get(&(class.to_string(), source))?.get(index)
    }
}

fn record(class: &str, source: Source, seed_glyph: &str) -> SymbolRecord {
    SymbolRecord {
        id: String::new(),
        class: class.to_string(),
        source,
        seed_glyph: seed_glyph.to_string(),
        parse_index: None,
        token_seed: None,
        augment: None,
    }
}

/// Sources a mixture actually draws from.
pub fn needed_sources(mix: &MixPolicy) -> Vec<Source> {
    let mut out = Vec::new();
    if mix.rho > 0.0 {
        out.push(Source::Bpl);
    }
    if mix.rho < 1.0 {
        out.push(Source::RealAug);
    }
    out
}

/// BPL exemplars and augmented copies of every selected crop. Each crop's
/// work is seeded from `(seed, source/class, crop index)`.
pub fn build_pools(
    selected: &CropSet,
    lib: Option<&PrimitiveLibrary>,
    cfg: &PipelineConfig,
    sources: &[Source],
) -> Result<PoolSet> {
    let jobs: Vec<(&String, usize, &Crop, Source)> = sources
        .iter()
        .flat_map(|&s| {
            selected.iter().flat_map(move |(class, list)| {
                list.iter().enumerate().map(move |(j, c)| (class, j, c, s))
            })
        })
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(class, j, crop, source)| {
            let mut rng = derive_rng(cfg.seed, &format!("{source}/{class}"), j as u64);
            let items = match source {
                Source::Bpl => {
                    let lib = lib.ok_or_else(|| {
                        Error::config("library", "BPL generation needs a library")
                    })?;
                    let gen = &cfg.generation;
                    let parses = parse_glyph(&crop.image, lib, &gen.parser, &mut rng)?;
                    generate_from_parses(&parses, gen.n, lib, gen, &mut rng)?
                        .into_iter()
                        .map(|e| {
                            let mut r = record(class, source, &crop.name);
                            r.parse_index = Some(e.parse_index);
                            r.token_seed = Some(e.token_seed);
                            (e.image, r)
                        })
                        .collect::<Vec<_>>()
                }
                Source::RealAug => (0..cfg.augment_copies)
                    .map(|_| {
                        let t = cfg.augment.sample(&mut rng);
                        let mut r = record(class, source, &crop.name);
                        r.augment = Some(t);
                        Ok((t.apply(&crop.image)?, r))
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            Ok((class.clone(), source, items))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = PoolSet::default();
    for (class, source, items) in results {
        set.add(&class, source, items);
    }
    Ok(set)
}

/// Reads one transcription per non-empty line, labels separated by spaces.
pub fn load_transcriptions(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn text_source(cfg: &PipelineConfig, classes: Vec<String>) -> Result<TextSource> {
    Ok(match &cfg.text {
        Some(path) => TextSource::Lines(load_transcriptions(path)?),
        None => TextSource::Uniform { alphabet: classes },
    })
}

/// Training lines under `mix`, seeded from the config seed.
pub fn compose_lines(
    pools: &PoolSet,
    cfg: &PipelineConfig,
    mix: &MixPolicy,
    text: &TextSource,
) -> Result<Vec<LineSample>> {
    build_dataset(
        &pools.pools,
        mix,
        &cfg.compose,
        cfg.lines,
        text,
        derive_seed(cfg.seed, "lines", 0),
    )
}

/// Held-out lines from the unselected real crops, unaugmented.
pub fn compose_test_lines(held_out: &CropSet, cfg: &PipelineConfig) -> Result<Vec<LineSample>> {
    if let Some((class, _)) = held_out.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::InsufficientData(format!(
            "class {class} has no crops left for a held-out test set"
        )));
    }
    let pools = PoolSet::from_crops(held_out, Source::RealAug);
    let text = TextSource::Uniform {
        alphabet: held_out.keys().cloned().collect(),
    };
    let mix = MixPolicy {
        mode: MixMode::HomL,
        rho: 0.0,
    };
    build_dataset(
        &pools.pools,
        &mix,
        &cfg.compose,
        cfg.test_lines,
        &text,
        derive_seed(cfg.seed, "test", 0),
    )
}

/// A composed training set and everything needed to describe it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub lines: Vec<LineSample>,
    pub pools: PoolSet,
    pub scenario: Scenario,
}

/// The full mixing pipeline: crops, scenario selection, pools for the
/// sources the mix needs, and composed lines.
pub fn build_mixed(cfg: &PipelineConfig) -> Result<Dataset> {
    cfg.validate()?;
    let crops = load_crops(cfg)?;
    let scenario = select_scenario(&crops, cfg.scenario, cfg.seed);
    let sources = needed_sources(&cfg.mix);
    let lib = if sources.contains(&Source::Bpl) {
        Some(load_library(cfg)?)
    } else {
        None
    };
    let pools = build_pools(&scenario.selected, lib.as_ref(), cfg, &sources)?;
    let text = text_source(cfg, scenario.selected.keys().cloned().collect())?;
    let lines = compose_lines(&pools, cfg, &cfg.mix, &text)?;
    Ok(Dataset {
        lines,
        pools,
        scenario,
    })
}

/// Lines composed from crops that are used as they are, all tagged `source`.
pub fn build_composed(crops: &CropSet, source: Source, cfg: &PipelineConfig) -> Result<Dataset> {
    cfg.compose.validate()?;
    let pools = PoolSet::from_crops(crops, source);
    let text = text_source(cfg, crops.keys().cloned().collect())?;
    let rho = if source == Source::Bpl { 1.0 } else { 0.0 };
    let lines = compose_lines(
        &pools,
        cfg,
        &MixPolicy {
            mode: MixMode::HomL,
            rho,
        },
        &text,
    )?;
    let scenario = Scenario {
        selected: crops.clone(),
        held_out: CropSet::new(),
        short_classes: Vec::new(),
    };
    Ok(Dataset {
        lines,
        pools,
        scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::AugmentParams;

    fn write_png(path: &Path, img: &GlyphImage) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        img.save_png(path).unwrap();
    }

    fn blob(seed: usize) -> GlyphImage {
        let mut img = GlyphImage::new(30, 30);
        for i in 0..20 {
            img.set(5 + i, 5 + (i * (seed + 1)) % 20, 1.0);
            img.set(5 + i, 6 + (i * (seed + 1)) % 20, 1.0);
        }
        img
    }

    #[test]
    fn ingest_counts_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        for c in 0..3 {
            for j in 0..4 {
                write_png(&dir.path().join(format!("k{c}/s{j}.png")), &blob(c + j));
            }
        }
        std::fs::write(dir.path().join("k0/notes.txt"), "ignored").unwrap();
        let crops = ingest(dir.path(), None, 105, 10).unwrap();
        assert_eq!(crops.len(), 3);
        assert!(crops.values().all(|v| v.len() == 4));
        assert!(crops["k1"]
            .iter()
            .all(|c| c.image.width() == 105 && c.image.is_binary()));

        let s = select_scenario(&crops, 1, 9);
        assert!(s.selected.values().all(|v| v.len() == 1));
        assert!(s.held_out.values().all(|v| v.len() == 3));
        assert_eq!(select_scenario(&crops, 1, 9).selected, s.selected);
        assert_eq!(
            select_scenario(&crops, 6, 9).short_classes,
            ["k0", "k1", "k2"]
        );
    }

    #[test]
    fn ingest_errors_name_the_problem() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("empty")).unwrap();
        assert!(
            matches!(ingest(dir.path(), None, 105, 10), Err(Error::MissingClass(p)) if p.ends_with("empty"))
        );

        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("a/bad.png"), b"not a png").unwrap();
        assert!(
            matches!(ingest(dir.path(), None, 105, 10), Err(Error::ImageDecode { path, .. }) if path.ends_with("bad.png"))
        );
    }

    #[test]
    fn augmented_pools_record_their_transforms() {
        let crops = demo_crops(3, 2, 1, 0.5, &Default::default()).unwrap();
        let cfg = PipelineConfig {
            augment_copies: 4,
            augment: AugmentParams::default(),
            ..PipelineConfig::default()
        };
        let set = build_pools(&crops, None, &cfg, &[Source::RealAug]).unwrap();
        for class in crops.keys() {
            let imgs = set.pools.get(class, Source::RealAug);
            assert_eq!(imgs.len(), 8);
            let rec = set.record(class, Source::RealAug, 5).unwrap();
            assert_eq!(rec.id, format!("real_aug/{class}/5"));
            assert_eq!(rec.seed_glyph, "w01");
            let redo = rec.augment.unwrap().apply(&crops[class][1].image).unwrap();
            assert_eq!(&redo, &imgs[5]);
        }
        assert!(matches!(
            build_pools(&crops, None, &cfg, &[Source::Bpl]),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn restricted_alphabet_must_exist() {
        let crops = demo_crops(2, 1, 1, 0.5, &Default::default()).unwrap();
        assert_eq!(restrict(crops.clone(), &["c01".into()]).unwrap().len(), 1);
        assert!(matches!(
            restrict(crops, &["zz".into()]),
            Err(Error::Config { .. })
        ));
    }
}
