use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AggregationMode, BinaryMask};
use crate::error::{Error, Result};
use crate::grid::RgbImage;
use crate::scene::{write_png_mask, write_png_rgb, CaptionedScene};

pub const INDEX_FILE: &str = "segmentation_index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationIndex {
    pub scene_id: String,
    /// token → mask file name, relative to the index.
    pub masks: BTreeMap<String, String>,
    pub overlay: String,
    pub k: f64,
    pub aggregation: AggregationMode,
}

const PALETTE: [[f64; 3]; 5] = [[1.0, 0.1, 0.1], [0.1, 0.4, 1.0], [0.1, 0.9, 0.2], [1.0, 0.8, 0.0], [0.8, 0.2, 1.0]];

fn file_stem(token: &str) -> String {
    token.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect::<String>().trim_matches('_').to_string()
}

/// Writes each mask (nearest-neighbour resampled to the image size), a
/// colour overlay on the scene image and the JSON index.
pub fn export_segmentation(
    masks: &[BinaryMask],
    scene: &CaptionedScene,
    aggregation: AggregationMode,
    out: &Path,
) -> Result<SegmentationIndex> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (w, h) = (scene.image.width, scene.image.height);
    let mut index = SegmentationIndex {
        scene_id: scene.scene_id.clone(),
        masks: BTreeMap::new(),
        overlay: format!("{}_overlay.png", scene.scene_id),
        k: masks.first().map_or(0.5, |m| m.k),
        aggregation,
    };
    let mut overlay: RgbImage = scene.image.clone();
    for (i, m) in masks.iter().enumerate() {
        let full = m.mask.resize_nearest(w, h);
        let name = format!("{}_{}.png", scene.scene_id, file_stem(&m.token));
        write_png_mask(&out.join(&name), &full)?;
        index.masks.insert(m.token.clone(), name);
        let c = PALETTE[i % PALETTE.len()];
        for y in 0..h {
            for x in 0..w {
                if full.get(x, y) {
                    let p = overlay.get(x, y);
                    overlay.set(x, y, [0.5 * p[0] + 0.5 * c[0], 0.5 * p[1] + 0.5 * c[1], 0.5 * p[2] + 0.5 * c[2]]);
                }
            }
        }
    }
    write_png_rgb(&out.join(&index.overlay), &overlay)?;
    let json = serde_json::to_string_pretty(&index)?;
    let path = out.join(INDEX_FILE);
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}
