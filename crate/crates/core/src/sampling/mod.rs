//! Patch sampling: random samplers for training, a dense grid with an
//! aggregator for inference, and a prefetching queue.
//!
//! Samplers never pad. A patch must fit inside the volume, so the valid
//! origins along an axis of length `n` for a patch of size `s` are
//! `0..=n-s`. The patch centre is `origin + s / 2`.

mod grid;
mod queue;

pub use grid::{grid_locations, AggregationMode, Aggregator, GridSampler};
pub use queue::{EpochIter, Queue, QueueConfig};

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Subject;
use crate::rng::Rng;
use crate::transforms::spatial::crop_image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchLocation {
    /// Voxel index of the low corner.
    pub origin: [usize; 3],
    pub size: [usize; 3],
}

/// A cropped subject and where it came from.
#[derive(Clone, Debug)]
pub struct Patch {
    pub subject: Subject,
    pub location: PatchLocation,
    /// Index of the source subject in its dataset.
    pub subject_index: usize,
}

fn check_fits(shape: [usize; 3], patch: [usize; 3]) -> Result<()> {
    if (0..3).any(|a| patch[a] == 0 || patch[a] > shape[a]) {
        return Err(Error::PatchTooLarge { patch, volume: shape });
    }
    Ok(())
}

/// Crops every image of the subject to `location`; affines are shifted so
/// each voxel keeps its physical position.
pub fn extract_patch(subject: &Subject, location: &PatchLocation) -> Result<Subject> {
    let shape = subject.spatial_shape()?;
    check_fits(shape, location.size)?;
    if (0..3).any(|a| location.origin[a] + location.size[a] > shape[a]) {
        return Err(Error::UnknownLocation(location.origin));
    }
    let mut out = subject.clone();
    for image in out.images.values_mut() {
        let n = image.spatial_shape()?;
        let high = [0, 1, 2].map(|a| n[a] - location.origin[a] - location.size[a]);
        *image = crop_image(image, location.origin, high)?;
    }
    Ok(out)
}

/// Origin drawn uniformly over the valid origins, axis by axis.
pub fn uniform_location(shape: [usize; 3], patch: [usize; 3], rng: &mut Rng) -> Result<PatchLocation> {
    check_fits(shape, patch)?;
    let origin = [0, 1, 2].map(|a| rng.below((shape[a] - patch[a] + 1) as u64) as usize);
    Ok(PatchLocation { origin, size: patch })
}

/// Origin drawn with probability proportional to `weights` at the patch
/// centre; centres whose patch would not fit are ignored. `weights` is a
/// flattened `[x][y][z]` volume of shape `shape`.
pub fn weighted_location(weights: &[f64], shape: [usize; 3], patch: [usize; 3], rng: &mut Rng) -> Result<PatchLocation> {
    check_fits(shape, patch)?;
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("probability map must be finite and non-negative".into()));
    }
    let valid = [0, 1, 2].map(|a| shape[a] - patch[a] + 1);
    let half = patch.map(|s| s / 2);
    let mut cumulative = Vec::with_capacity(valid.iter().product());
    let mut total = 0.0;
    for i in 0..valid[0] {
        for j in 0..valid[1] {
            for k in 0..valid[2] {
                let c = [i + half[0], j + half[1], k + half[2]];
                total += weights[(c[0] * shape[1] + c[1]) * shape[2] + c[2]];
                cumulative.push(total);
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::AllZeroProbability);
    }
    let target = rng.uniform() * total;
    let idx = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
    let origin = [idx / (valid[1] * valid[2]), (idx / valid[2]) % valid[1], idx % valid[2]];
    Ok(PatchLocation { origin, size: patch })
}

/// How random patches are placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampler {
    Uniform { patch_size: [usize; 3] },
    /// Centres drawn in proportion to the first channel of the named image.
    Weighted { patch_size: [usize; 3], probability_image: String },
}

impl Sampler {
    pub fn patch_size(&self) -> [usize; 3] {
        match self {
            Sampler::Uniform { patch_size } | Sampler::Weighted { patch_size, .. } => *patch_size,
        }
    }

    pub fn location(&self, subject: &Subject, rng: &mut Rng) -> Result<PatchLocation> {
        let shape = subject.spatial_shape()?;
        match self {
            Sampler::Uniform { patch_size } => uniform_location(shape, *patch_size, rng),
            Sampler::Weighted {
                patch_size,
                probability_image,
            } => {
                let data = subject.image(probability_image)?.data()?.to_f32();
                let weights: Vec<f64> = data.index_axis(Axis(0), 0).iter().map(|&v| v as f64).collect();
                weighted_location(&weights, shape, *patch_size, rng)
            }
        }
    }

    pub fn sample(&self, subject: &Subject, subject_index: usize, rng: &mut Rng) -> Result<Patch> {
        let location = self.location(subject, rng)?;
        Ok(Patch {
            subject: extract_patch(subject, &location)?,
            location,
            subject_index,
        })
    }
}

pub fn uniform_sample(subject: &Subject, patch_size: [usize; 3], rng: &mut Rng) -> Result<Patch> {
    Sampler::Uniform { patch_size }.sample(subject, 0, rng)
}

pub fn weighted_sample(subject: &Subject, patch_size: [usize; 3], probability_image: &str, rng: &mut Rng) -> Result<Patch> {
    Sampler::Weighted {
        patch_size,
        probability_image: probability_image.to_string(),
    }
    .sample(subject, 0, rng)
}
