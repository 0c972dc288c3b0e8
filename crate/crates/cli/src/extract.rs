use exactct_core::biomarkers::{
    assemble_features, comb_sign_layers, detect_calcified, detect_necrotic, fat_mask, fat_ratio_volume, ptb_probability,
    region_aggregate, CombLayers, CombScores, FatResult, FatSummary, FeatureVector, Landmarks, NodeResult, RegionScore,
    RegionSpec, Regions,
};
use exactct_core::BinaryMask;

use crate::config::ExtractConfig;
use crate::error::Result;
use crate::manifest::LoadedCase;

/// Features plus every intermediate map needed for rendering.
#[derive(Debug, Clone)]
pub struct Findings {
    pub features: FeatureVector,
    pub regions: Regions,
    pub comb: CombLayers,
    pub fat_mask: BinaryMask,
    pub fat: FatResult,
    pub calcified: NodeResult,
    pub necrotic: NodeResult,
}

fn score(layers: &CombLayers, r: &RegionSpec) -> Result<RegionScore> {
    let (sum, ratio) = region_aggregate(&layers.comb, r)?;
    Ok(RegionScore { sum, ratio })
}

pub fn extract_case(case: &LoadedCase, cfg: &ExtractConfig, seed: u64) -> Result<Findings> {
    let regions = Landmarks {
        l3: &case.l3,
        l4: &case.l4,
        l5: &case.l5,
        s1: &case.s1,
        body: &case.body,
    }
    .regions()?;
    let comb = comb_sign_layers(&case.ct, &case.intestine, &cfg.comb, seed)?;
    let scores = CombScores {
        left: score(&comb, &regions.l3s1_left)?,
        right: score(&comb, &regions.l3s1_right)?,
        center: score(&comb, &regions.anterior_central)?,
    };

    let fat_mask = fat_mask(&case.ct);
    let fat = fat_ratio_volume(&fat_mask, &case.body, regions.l4l5.z_range, cfg.fat_rays)?;

    let ptb = match case.manifest.ptb_logit {
        Some(z) => ptb_probability(z)?,
        None => cfg.missing_ptb_prob,
    };

    let organs: Vec<&BinaryMask> = case.organs.iter().collect();
    let mut calc_params = cfg.calcified;
    if calc_params.abdominal_range.is_none() {
        calc_params.abdominal_range = Some(regions.l3s1_left.z_range);
    }
    let calcified = detect_calcified(&case.ct, &organs, &calc_params)?;
    let necrotic = detect_necrotic(&case.ct, &organs, &case.visceral_fat, &cfg.necrotic)?;

    let features = assemble_features(
        &case.manifest.case_id,
        scores,
        FatSummary {
            ratio: fat.fat_ratio,
            min: fat.min_ratio,
            max: fat.max_ratio,
        },
        ptb,
        calcified.volume_mm3,
        necrotic.volume_mm3,
    )?;
    Ok(Findings {
        features,
        regions,
        comb,
        fat_mask,
        fat,
        calcified,
        necrotic,
    })
}
