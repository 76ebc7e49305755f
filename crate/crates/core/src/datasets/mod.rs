//! Pipeline configuration, ingestion of real crops, pool building and
//! dataset persistence with checksummed manifests.

mod config;
mod manifest;
mod pipeline;

pub use config::{GlyphSource, LibrarySource, PipelineConfig};
pub use manifest::{
    load_manifest, rebuild, regenerate, save_manifest, sha256_hex, verify_dataset, write_dataset,
    DatasetManifest, DatasetOrigin, FileEntry, LineRecord, FORMAT_VERSION, MANIFEST_FILE,
    TRANSCRIPTION_FILE,
};
pub use pipeline::{
    build_composed, build_mixed, build_pools, compose_lines, compose_test_lines, demo_crops,
    ingest, load_crops, load_library, load_transcriptions, needed_sources, select_scenario,
    text_source, Crop, CropSet, Dataset, PoolSet, Scenario, SymbolRecord,
};
