//! Training-style loop: a dataset of augmented subjects feeding random patches
//! through the prefetching queue, weighted towards a label map.

use ndarray::Array4;
use voxaug::{AffineMatrix, Image, PipelineSpec, Queue, QueueConfig, Sampler, Subject, SubjectsDataset};

fn main() -> voxaug::Result<()> {
    let subjects = (0..6)
        .map(|n| {
            let t1 = Array4::from_shape_fn((1, 40, 40, 40), |(_, i, j, k)| ((i + j + k + n) % 17) as f32);
            let mut lesion = Array4::<f32>::zeros((1, 40, 40, 40));
            lesion.slice_mut(ndarray::s![.., 10 + n..20 + n, 12..22, 15..25]).fill(1.0);
            Subject::new()
                .with_image("t1", Image::scalar(t1, AffineMatrix::identity()))
                .with_image("lesion", Image::scalar(lesion, AffineMatrix::identity()))
        })
        .collect();
    let augment = PipelineSpec::from_json(
        r#"{"type":"compose","children":[
            {"type":"leaf","name":"RandomFlip","params":{"axes":[0,1,2]}},
            {"type":"leaf","name":"RandomGamma"}]}"#,
    )?;
    let dataset = SubjectsDataset::new(subjects, Some(augment))?;
    let sampler = Sampler::Weighted {
        patch_size: [16, 16, 16],
        probability_image: "lesion".into(),
    };
    let queue = Queue::new(
        dataset,
        sampler,
        QueueConfig {
            max_length: 24,
            samples_per_volume: 4,
            num_workers: 2,
            seed: 1,
            ..QueueConfig::default()
        },
    )?;
    for epoch in 0..2 {
        let mut batch = Vec::new();
        for patch in queue.epoch(epoch) {
            batch.push(patch?);
            if batch.len() == 8 {
                let origins: Vec<_> = batch.iter().map(|p| (p.subject_index, p.location.origin)).collect();
                println!("epoch {epoch} batch {origins:?}");
                batch.clear();
            }
        }
    }
    Ok(())
}
