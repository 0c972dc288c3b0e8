//! Case-level biomarkers: the comb-sign map, regional aggregates, the
//! visceral/subcutaneous fat ratio, calcified and fluid-density nodes.

mod fat;
mod features;
mod nodes;
mod region;

pub use fat::{
    body_mask, fat_mask, fat_ratio_volume, polar_subcutaneous_area, FatResult, PolarScan, Ray,
    SliceFat, SliceMask, FAT_HU,
};
pub use features::{
    assemble_features, ptb_probability, CombScores, FatSummary, FeatureVector, RegionScore,
    FEATURE_NAMES,
};
pub use nodes::{detect_calcified, detect_necrotic, CalcifiedParams, NecroticParams, NodeResult};
pub use region::{region_aggregate, Landmarks, LateralRule, RegionSpec, Regions};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gmm::{wall_posterior_with, WallOptions};
use crate::vesselness::{
    frangi_response, refine_probability, wall_distance_weight, DistanceParams, RefineSchedule,
    VesselParams,
};
use crate::volume::{BinaryMask, CtVolume, ProbabilityVolume};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CombParams {
    pub vessel: VesselParams,
    pub refine: RefineSchedule,
    pub distance: DistanceParams,
    pub wall: WallOptions,
}

/// Intermediate layers of the comb-sign computation.
#[derive(Debug, Clone)]
pub struct CombLayers {
    pub vessel: ProbabilityVolume,
    pub wall: ProbabilityVolume,
    pub comb: ProbabilityVolume,
}

pub fn comb_sign_layers(
    vol: &CtVolume,
    intestine: &BinaryMask,
    params: &CombParams,
    seed: u64,
) -> Result<CombLayers> {
    vol.grid().ensure_same_dims(intestine.grid())?;
    let (wall, _) = wall_posterior_with(vol, intestine, seed, &params.wall)?;
    let vessel = refine_probability(&frangi_response(vol, &params.vessel)?, &params.refine)?;
    let comb = wall_distance_weight(&vessel, &wall, intestine, &params.distance)?;
    Ok(CombLayers { vessel, wall, comb })
}

pub fn comb_sign_map(
    vol: &CtVolume,
    intestine: &BinaryMask,
    params: &CombParams,
    seed: u64,
) -> Result<ProbabilityVolume> {
    comb_sign_layers(vol, intestine, params, seed).map(|l| l.comb)
}
