//! Pathological lung segmentation for CT volumes.
//!
//! Stage one extracts normal parenchyma with fuzzy connectedness from
//! automatically selected seeds. Stage two partitions the remaining rib-cage
//! search space into SLIC supervoxels, computes a GLCM/GLRLM/histogram
//! descriptor at each supervoxel centroid and lets a random forest decide
//! which supervoxels are pathological lung. Those are added to the stage-one
//! mask.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` and
//! `*32` aliases below name the concrete instantiations.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fc;
pub mod forest;
pub mod nifti;
pub mod pipeline;
pub mod scalar;
pub mod slic;
pub mod texture;
pub mod volume;

pub use error::{Error, Result, Side};
pub use scalar::Scalar;
pub use volume::{Dims, LabelMask, RawFormat, Volume};

pub type Volume64 = Volume<f64>;
pub type Volume32 = Volume<f32>;
pub type ConnectivityMap64 = fc::ConnectivityMap<f64>;
pub type ConnectivityMap32 = fc::ConnectivityMap<f32>;
pub type AffinityParams64 = fc::AffinityParams<f64>;
pub type AffinityParams32 = fc::AffinityParams<f32>;
pub type SupervoxelMap64 = slic::SupervoxelMap<f64>;
pub type SupervoxelMap32 = slic::SupervoxelMap<f32>;
pub type FeatureVector64 = texture::FeatureVector<f64>;
pub type FeatureVector32 = texture::FeatureVector<f32>;
pub type ForestModel64 = forest::ForestModel<f64>;
pub type ForestModel32 = forest::ForestModel<f32>;
