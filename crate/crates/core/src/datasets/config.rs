use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentParams;
use crate::compose::{ComposePolicy, MixPolicy};
use crate::error::{Error, Result};
use crate::eval::DecoderConfig;
use crate::generator::GenerationConfig;
use crate::procedural::WriterNoise;
use crate::stroke_model::LibraryConfig;

/// Where the real glyph crops come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GlyphSource {
    /// A procedural alphabet; each class gets `instances` writer variants.
    Demo {
        classes: usize,
        instances: usize,
        seed: u64,
        max_iou: f64,
        #[serde(default)]
        writer: WriterNoise,
    },
    /// `<path>/<class-id>/<name>.png`
    Directory { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LibrarySource {
    /// Fitted on a procedural stroke corpus of `glyphs` glyphs.
    Demo {
        glyphs: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Classes to use; empty means every class the source provides.
    pub alphabet: Vec<String>,
    pub source: GlyphSource,
    /// Real exemplars per class.
    pub scenario: usize,
    pub library: LibrarySource,
    pub library_config: LibraryConfig,
    pub generation: GenerationConfig,
    pub augment: AugmentParams,
    /// Augmented copies per selected real exemplar.
    pub augment_copies: usize,
    pub compose: ComposePolicy,
    pub mix: MixPolicy,
    pub lines: usize,
    /// Held-out lines for evaluation, composed from unselected real crops.
    pub test_lines: usize,
    /// Optional transcription file, one line per sample.
    pub text: Option<PathBuf>,
    pub recognizer: DecoderConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alphabet: Vec::new(),
            source: GlyphSource::Demo {
                classes: 10,
                instances: 20,
                seed: 5,
                max_iou: 0.5,
                writer: WriterNoise::default(),
            },
            scenario: 10,
            library: LibrarySource::Demo {
                glyphs: 300,
                seed: 3,
            },
            library_config: LibraryConfig::default(),
            generation: GenerationConfig::default(),
            augment: AugmentParams::default(),
            augment_copies: 9,
            compose: ComposePolicy::default(),
            mix: MixPolicy::default(),
            lines: 100,
            test_lines: 100,
            text: None,
            recognizer: DecoderConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." {
                    "<root>".to_string()
                } else {
                    path
                },
                e.into_inner().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario == 0 {
            return Err(Error::config("scenario", "must be at least 1"));
        }
        if let GlyphSource::Demo {
            classes,
            instances,
            max_iou,
            ..
        } = &self.source
        {
            if *classes == 0 || *instances == 0 {
                return Err(Error::config(
                    "source",
                    "demo source needs at least one class and instance",
                ));
            }
            if !(0.0..=1.0).contains(max_iou) {
                return Err(Error::config("source.max_iou", "must lie in [0, 1]"));
            }
        }
        if self.augment_copies == 0 {
            return Err(Error::config("augment_copies", "must be at least 1"));
        }
        if self.lines == 0 {
            return Err(Error::config("lines", "must be at least 1"));
        }
        self.generation
            .validate()
            .map_err(|e| prefix("generation", e))?;
        self.augment.validate().map_err(|e| prefix("augment", e))?;
        self.compose.validate()?;
        self.mix.validate()?;
        self.recognizer.validate()?;
        Ok(())
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } if !field.starts_with(section) => Error::Config {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let err = PipelineConfig::from_json(r#"{"compose": {"gap": {"min": "x", "max": 2}}}"#)
            .unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "compose.gap.min"),
            "{err}"
        );
        let err =
            PipelineConfig::from_json(r#"{"mix": {"mode": "homl", "rho": 1.5}}"#).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "mix.rho"),
            "{err}"
        );
        let err = PipelineConfig::from_json(r#"{"sceanrio": 3}"#).unwrap_err();
        assert!(matches!(&err, Error::Config { .. }), "{err}");
        let err = PipelineConfig::from_json(r#"{"generation": {"k": 0}}"#).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "generation.k"),
            "{err}"
        );
    }
}
