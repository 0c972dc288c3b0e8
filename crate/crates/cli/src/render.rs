//! Overlay bundles: `manifest.json` plus one little-endian float32 file per
//! layer, x varying fastest.

use std::path::Path;

use exactct_core::BinaryMask;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::extract::Findings;
use crate::manifest::LoadedCase;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const COMB_COLOR: &str = "#ff0000";
pub const FAT_COLOR: &str = "#ffff00";
pub const CALCIFIED_COLOR: &str = "#00ff00";
pub const NECROTIC_COLOR: &str = "#0000ff";
pub const BASE_COLOR: &str = "#ffffff";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Raw HU, shown through the display window.
    Intensity,
    Probability,
    Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub color: String,
    pub kind: LayerKind,
    pub file: String,
    pub value_range: [f32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayManifest {
    pub format_version: u32,
    pub case_id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub affine: [[f64; 4]; 4],
    pub window: [f64; 2],
    pub layers: Vec<LayerEntry>,
}

fn value_range(v: &[f32]) -> [f32; 2] {
    let lo = v.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = v.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    [lo, hi]
}

fn write_layer(dir: &Path, file: &str, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let p = dir.join(file);
    std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))
}

fn mask_values(m: &BinaryMask) -> Vec<f32> {
    m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

/// Assemble and write the bundle for one extracted case.
pub fn write_bundle(case: &LoadedCase, f: &Findings, window: [f64; 2], out: &Path) -> Result<OverlayManifest> {
    if !(window[0] < window[1]) {
        return Err(CliError::Invalid("render window needs lo < hi".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let grid = case.ct.grid();
    let mut layers = Vec::new();
    let mut push = |name: &str, color: &str, kind: LayerKind, values: Vec<f32>| -> Result<()> {
        let file = format!("{name}.bin");
        write_layer(out, &file, &values)?;
        layers.push(LayerEntry {
            name: name.into(),
            color: color.into(),
            kind,
            file,
            value_range: value_range(&values),
        });
        Ok(())
    };
    push("base", BASE_COLOR, LayerKind::Intensity, case.ct.voxels().to_vec())?;
    push("comb", COMB_COLOR, LayerKind::Probability, f.comb.comb.values().to_vec())?;
    let [z0, z1] = f.regions.l4l5.z_range;
    let fat = BinaryMask::from_fn(grid.clone(), |x, y, z| z >= z0 && z <= z1 && f.fat_mask.get(x, y, z));
    push("fat", FAT_COLOR, LayerKind::Mask, mask_values(&fat))?;
    if !f.calcified.mask.is_empty() {
        push("calcified", CALCIFIED_COLOR, LayerKind::Mask, mask_values(&f.calcified.mask))?;
    }
    if !f.necrotic.mask.is_empty() {
        push("necrotic", NECROTIC_COLOR, LayerKind::Mask, mask_values(&f.necrotic.mask))?;
    }
    let manifest = OverlayManifest {
        format_version: BUNDLE_FORMAT_VERSION,
        case_id: case.manifest.case_id.clone(),
        dims: grid.dims,
        spacing: grid.spacing,
        affine: grid.affine,
        window,
        layers,
    };
    let p = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::parse(&p, e))?;
    std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
    Ok(manifest)
}

/// Published JSON schema of `manifest.json`.
pub const MANIFEST_SCHEMA: &str = include_str!("../schema/overlay-manifest.schema.json");
