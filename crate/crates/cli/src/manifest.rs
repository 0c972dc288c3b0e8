use std::path::{Path, PathBuf};

use exactct_core::nifti::{read_mask, read_nifti};
use exactct_core::{BinaryMask, CtVolume};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Mask files by anatomical role. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskPaths {
    pub intestine: Option<PathBuf>,
    /// Organs excluded from calcified detection and searched for necrotic nodes.
    pub organs: Vec<PathBuf>,
    pub l3: Option<PathBuf>,
    pub l4: Option<PathBuf>,
    pub l5: Option<PathBuf>,
    pub s1: Option<PathBuf>,
    pub body: Option<PathBuf>,
    pub visceral_fat: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseManifest {
    pub case_id: String,
    pub ct: PathBuf,
    pub masks: MaskPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptb_logit: Option<f64>,
    /// `true` for CD, `false` for ITB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

impl CaseManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut m: CaseManifest = serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve(base);
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.ct);
        let m = &mut self.masks;
        for p in [&mut m.intestine, &mut m.l3, &mut m.l4, &mut m.l5, &mut m.s1, &mut m.body, &mut m.visceral_fat]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        m.organs.iter_mut().for_each(fix);
    }

    fn require<'a>(&self, role: &'static str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
        p.as_deref().ok_or_else(|| CliError::MissingRole {
            case: self.case_id.clone(),
            role,
        })
    }
}

/// A case with every volume read and grid-checked.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub manifest: CaseManifest,
    pub ct: CtVolume,
    pub intestine: BinaryMask,
    pub organs: Vec<BinaryMask>,
    pub l3: BinaryMask,
    pub l4: BinaryMask,
    pub l5: BinaryMask,
    pub s1: BinaryMask,
    pub body: BinaryMask,
    pub visceral_fat: BinaryMask,
}

impl LoadedCase {
    pub fn load(manifest: CaseManifest) -> Result<Self> {
        let m = &manifest.masks;
        let roles = [
            ("intestine", &m.intestine),
            ("l3", &m.l3),
            ("l4", &m.l4),
            ("l5", &m.l5),
            ("s1", &m.s1),
            ("body", &m.body),
            ("visceral_fat", &m.visceral_fat),
        ];
        let mut paths = Vec::with_capacity(roles.len());
        for (role, p) in roles {
            paths.push(manifest.require(role, p)?.to_path_buf());
        }
        let ct = read_nifti(&manifest.ct)?;
        let read = |p: &Path| -> Result<BinaryMask> {
            let mask = read_mask(p)?;
            ct.grid().ensure_same_dims(mask.grid())?;
            Ok(mask)
        };
        let mut masks = paths.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?.into_iter();
        let organs = m.organs.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
        let mut next = || masks.next().expect("one mask per role");
        Ok(Self {
            intestine: next(),
            l3: next(),
            l4: next(),
            l5: next(),
            s1: next(),
            body: next(),
            visceral_fat: next(),
            organs,
            ct,
            manifest,
        })
    }
}
