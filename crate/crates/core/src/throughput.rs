//! Queue throughput harness on synthetic volumes.

use std::time::{Duration, Instant};

use ndarray::Array4;

use crate::affine::AffineMatrix;
use crate::error::Result;
use crate::image::{Image, Subject, SubjectsDataset};
use crate::rng::Rng;
use crate::sampling::{Queue, QueueConfig, Sampler};
use crate::transforms::PipelineSpec;

/// RandomAffine, RandomElasticDeformation, RandomBiasField, RandomNoise with
/// default parameters.
pub fn augmentation_pipeline() -> PipelineSpec {
    PipelineSpec::from_json(
        r#"{"type": "compose", "children": [
            {"type": "leaf", "name": "RandomAffine"},
            {"type": "leaf", "name": "RandomElasticDeformation"},
            {"type": "leaf", "name": "RandomBiasField"},
            {"type": "leaf", "name": "RandomNoise"}
        ]}"#,
    )
    .expect("built-in pipeline is valid")
}

/// Smooth blobs plus noise, 1 mm isotropic.
pub fn synthetic_volume(size: usize, seed: u64) -> Image {
    let mut rng = Rng::new(seed);
    let c = size as f64 / 2.0;
    let blobs: Vec<([f64; 3], f64)> = (0..4)
        .map(|_| {
            let centre = [0; 3].map(|_| rng.uniform_range(0.25, 0.75) * size as f64);
            (centre, rng.uniform_range(0.05, 0.2) * size as f64)
        })
        .collect();
    let data = Array4::from_shape_fn((1, size, size, size), |(_, i, j, k)| {
        let p = [i as f64, j as f64, k as f64];
        let mut v = 0.0;
        for (centre, width) in &blobs {
            let d2: f64 = (0..3).map(|a| (p[a] - centre[a]).powi(2)).sum();
            v += (-d2 / (2.0 * width * width)).exp();
        }
        let r2: f64 = p.iter().map(|x| (x - c).powi(2)).sum();
        (v + if r2 < c * c * 0.8 { 0.3 } else { 0.0 }) as f32
    });
    Image::scalar(data, AffineMatrix::identity())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputConfig {
    pub volume_size: usize,
    pub patch_size: usize,
    pub subjects: usize,
    pub samples_per_volume: usize,
    pub seed: u64,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        ThroughputConfig {
            volume_size: 128,
            patch_size: 64,
            subjects: 8,
            samples_per_volume: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ThroughputReport {
    pub workers: usize,
    pub patches: usize,
    pub elapsed: Duration,
}

impl ThroughputReport {
    pub fn patches_per_second(&self) -> f64 {
        self.patches as f64 / self.elapsed.as_secs_f64()
    }
}

/// Runs one epoch of the queue with `workers` threads and times it.
pub fn measure(config: &ThroughputConfig, workers: usize) -> Result<ThroughputReport> {
    let subjects = (0..config.subjects)
        .map(|i| Subject::new().with_image("image", synthetic_volume(config.volume_size, config.seed + i as u64)))
        .collect();
    let dataset = SubjectsDataset::new(subjects, Some(augmentation_pipeline()))?;
    let queue = Queue::new(
        dataset,
        Sampler::Uniform {
            patch_size: [config.patch_size; 3],
        },
        QueueConfig {
            max_length: config.samples_per_volume * workers.max(1) * 2,
            samples_per_volume: config.samples_per_volume,
            num_workers: workers,
            shuffle_subjects: true,
            shuffle_patches: true,
            seed: config.seed,
        },
    )?;
    let start = Instant::now();
    let mut patches = 0;
    for patch in queue.epoch(0) {
        patch?;
        patches += 1;
    }
    Ok(ThroughputReport {
        workers,
        patches,
        elapsed: start.elapsed(),
    })
}
