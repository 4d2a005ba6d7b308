//! Deterministic synthetic multi-concept scenes with adjective–noun
//! captions and pixel-exact per-concept masks.

pub mod catalog;
mod dataset;
mod raster;
mod spec;
mod world;

pub use dataset::{
    generate_dataset, generate_dataset_with, load_batch, preset_concepts, render_dataset, CaptionRecord, ConceptRecord,
    DatasetManifest, GenerationConfig, ManifestEntry, SceneView, CAPTIONS_FILE, MANIFEST_FILE,
};
pub use dataset::{read_png_mask, read_png_rgb, write_png_mask, write_png_rgb};
pub use raster::{generate_scene, LAYOUT_RETRIES};
pub use spec::{
    joined_template, CaptionPart, CaptionedScene, ConceptLabel, ConceptSpec, LayoutPolicy, SceneSpec, ShapeKind, Texture,
    DEFAULT_BACKGROUND, DEFAULT_CANVAS, MAX_CONCEPTS, MIN_CONCEPTS,
};
pub use world::{size_range_for, world_scene, world_scenes, WorldConfig};
