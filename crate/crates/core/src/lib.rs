//! Radiological biomarker extraction and interpretable classification for
//! abdominal CT enterography volumes.
//!
//! The crate is organised bottom-up: volume I/O and morphology feed the
//! mixture-model and vesselness filters, which compose into per-case
//! biomarkers; the `ml`, `xgb` and `shap` modules classify and explain the
//! resulting feature vectors.

pub mod biomarkers;
pub mod error;
pub mod filter;
pub mod gmm;
pub mod ml;
pub mod morphology;
pub mod nifti;
pub mod shap;
pub mod synth;
pub mod tree;
pub mod vesselness;
pub mod volume;
pub mod xgb;

pub use error::{Error, Result};
pub use volume::{BinaryMask, CtVolume, Grid, ProbabilityVolume};
