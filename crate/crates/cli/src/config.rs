use std::path::Path;

use exactct_core::biomarkers::{CalcifiedParams, CombParams, NecroticParams};
use exactct_core::ml::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::synth::CohortSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub comb: CombParams,
    /// Polar rays per slice for the fat ratio.
    pub fat_rays: usize,
    pub calcified: CalcifiedParams,
    pub necrotic: NecroticParams,
    /// Used when a manifest carries no pulmonary-TB logit.
    pub missing_ptb_prob: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            comb: CombParams::default(),
            fat_rays: 360,
            calcified: CalcifiedParams::default(),
            necrotic: NecroticParams::default(),
            missing_ptb_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Default display window in HU.
    pub window: [f64; 2],
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { window: [-150.0, 250.0] }
    }
}

/// Every tunable constant of the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub extract: ExtractConfig,
    pub train: TrainConfig,
    pub render: RenderConfig,
    pub synth: CohortSpec,
}

impl Config {
    /// Layer `key.path=value` overrides over an optional TOML file.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| CliError::parse(p, e))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
