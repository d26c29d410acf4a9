//! Loading, preprocessing, augmentation and patch sampling for 3D medical
//! images.

pub mod affine;
pub mod cli;
pub mod error;
pub mod image;
pub mod nifti;
pub mod render;
pub mod resample;
pub mod rng;
pub mod sampling;
pub mod schema;
pub mod service;
pub mod throughput;
pub mod transforms;

pub use affine::AffineMatrix;
pub use error::{Error, Result};
pub use image::{Image, ImageKind, Subject, SubjectsDataset, VoxelData};
pub use resample::Interpolation;
pub use rng::{seed_for, Rng};
pub use sampling::{Aggregator, GridSampler, Patch, PatchLocation, Queue, QueueConfig, Sampler};
pub use transforms::{history_as_pipeline, invert_history, PipelineSpec, Transform};
