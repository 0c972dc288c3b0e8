//! Analytic CT phantoms and the geometric/intensity augmentation stack.

mod augment;
mod phantom;

pub use augment::{
    add_noise, compose_augment, elastic_deform, random_translate, rotate_rigid, rotation_matrix,
    sample_shift, scale_uniform, translate, AugmentSpec, ElasticGrid, AIR_HU,
};
pub use phantom::{make_phantom, PhantomSpec, Primitive};
