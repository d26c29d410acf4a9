//! Dense inference: split a volume into overlapping patches, run a stand-in
//! model on each, and stitch the predictions back together.

use ndarray::Array4;
use voxaug::sampling::AggregationMode;
use voxaug::{AffineMatrix, Aggregator, GridSampler, Image, Subject, VoxelData};

/// Stand-in for a network: thresholds the patch.
fn model(patch: &Array4<f32>) -> Array4<f32> {
    patch.mapv(|v| (v > 0.5) as u8 as f32)
}

fn main() -> voxaug::Result<()> {
    let shape = [50, 45, 40];
    let volume = Array4::from_shape_fn((1, shape[0], shape[1], shape[2]), |(_, i, j, k)| {
        ((i as f32 / 7.0).sin() * (j as f32 / 5.0).cos() + k as f32 / 40.0).abs()
    });
    let subject = Subject::new().with_image("t1", Image::scalar(volume.clone(), AffineMatrix::identity()));
    let (patch, overlap) = ([24, 24, 24], [8, 8, 8]);

    for mode in [AggregationMode::Crop, AggregationMode::Average] {
        let mut aggregator = Aggregator::new(shape, patch, overlap, mode)?;
        let mut n = 0;
        for p in GridSampler::new(&subject, patch, overlap)? {
            let p = p?;
            let VoxelData::Scalar(x) = p.subject.images["t1"].data()? else { unreachable!() };
            aggregator.add(&model(x), &p.location)?;
            n += 1;
        }
        let prediction = aggregator.finalize()?;
        let agree = prediction.iter().zip(model(&volume).iter()).filter(|(a, b)| a == b).count();
        println!("{mode:?}: {n} patches, {agree}/{} voxels match whole-volume inference", prediction.len());
    }
    Ok(())
}
