use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{
    border_mask, connected_components, dilate, erode, union_masks, Component, Connectivity,
    StructuringElement,
};
use crate::volume::{BinaryMask, CtVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalcifiedParams {
    /// HU written over the dilated organ mask.
    pub h_calc: f32,
    pub t_calc: f64,
    pub dilation_radius: usize,
    /// Inclusive axial slice range; `None` keeps every slice.
    pub abdominal_range: Option<[usize; 2]>,
    /// Voxels cleared along every face of the volume.
    pub edge_margin: usize,
}

impl Default for CalcifiedParams {
    fn default() -> Self {
        Self {
            h_calc: 0.0,
            t_calc: 130.0,
            dilation_radius: 2,
            abdominal_range: None,
            edge_margin: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NecroticParams {
    pub t_low: f64,
    pub t_high: f64,
    pub erosion_iters: usize,
    /// Recovery dilation, in 6-connected steps.
    pub dilation_radius: usize,
    /// Cube radius used to grow the organ union into the search region.
    pub roi_dilation_radius: usize,
}

impl Default for NecroticParams {
    fn default() -> Self {
        Self {
            t_low: 0.0,
            t_high: 30.0,
            erosion_iters: 2,
            dilation_radius: 2,
            roi_dilation_radius: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeResult {
    pub mask: BinaryMask,
    pub volume_mm3: f64,
    pub components: Vec<Component>,
    /// Region the detector was barred from (calcified) or confined to (necrotic).
    pub region: BinaryMask,
}

fn merged(vol: &CtVolume, organs: &[&BinaryMask]) -> Result<BinaryMask> {
    if organs.is_empty() {
        return Ok(BinaryMask::empty(vol.grid().clone()));
    }
    for m in organs {
        vol.grid().ensure_same_dims(m.grid())?;
    }
    union_masks(organs)
}

fn grow(mask: &BinaryMask, radius: usize) -> BinaryMask {
    match StructuringElement::cube(radius) {
        Ok(e) => dilate(mask, e, 1),
        Err(_) => mask.clone(),
    }
}

pub fn detect_calcified(vol: &CtVolume, organs: &[&BinaryMask], params: &CalcifiedParams) -> Result<NodeResult> {
    if params.h_calc as f64 >= params.t_calc {
        return Err(Error::invalid("override HU must lie below the calcification threshold"));
    }
    let dilated = grow(&merged(vol, organs)?, params.dilation_radius);
    let nz = vol.dims()[2];
    let [z0, z1] = params.abdominal_range.unwrap_or([0, nz.saturating_sub(1)]);
    if z0 > z1 || z1 >= nz {
        return Err(Error::invalid(format!("abdominal range {:?} outside {nz} slices", [z0, z1])));
    }
    let border = border_mask(vol.grid(), params.edge_margin);
    let grid = vol.grid();
    let bits: Vec<bool> = vol
        .voxels()
        .iter()
        .enumerate()
        .map(|(i, &hu)| {
            let z = grid.coords(i)[2];
            let modified = if dilated.bits()[i] { params.h_calc } else { hu };
            modified as f64 >= params.t_calc && z >= z0 && z <= z1 && !border.bits()[i]
        })
        .collect();
    let mask = BinaryMask::new(grid.clone(), bits)?;
    let components = connected_components(&mask, Connectivity::TwentySix);
    Ok(NodeResult {
        volume_mm3: mask.count() as f64 * grid.voxel_volume(),
        mask,
        components,
        region: dilated,
    })
}

pub fn detect_necrotic(
    vol: &CtVolume,
    organs: &[&BinaryMask],
    visceral_fat: &BinaryMask,
    params: &NecroticParams,
) -> Result<NodeResult> {
    if params.t_low > params.t_high {
        return Err(Error::invalid("necrotic range must satisfy t_low <= t_high"));
    }
    vol.grid().ensure_same_dims(visceral_fat.grid())?;
    let roi = grow(&merged(vol, organs)?, params.roi_dilation_radius).minus(visceral_fat)?;
    let grid = vol.grid();
    let bits: Vec<bool> = vol
        .voxels()
        .iter()
        .zip(roi.bits())
        .map(|(&hu, &inside)| inside && (hu as f64) >= params.t_low && (hu as f64) <= params.t_high)
        .collect();
    let mut mask = BinaryMask::new(grid.clone(), bits)?;
    let step = StructuringElement::cross(1).expect("radius 1");
    mask = erode(&mask, step, params.erosion_iters);
    mask = dilate(&mask, step, params.dilation_radius);
    let mask = mask.intersect(&roi)?;
    let components = connected_components(&mask, Connectivity::TwentySix);
    Ok(NodeResult {
        volume_mm3: mask.count() as f64 * grid.voxel_volume(),
        mask,
        components,
        region: roi,
    })
}
