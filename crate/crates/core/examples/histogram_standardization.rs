//! Learns a landmark table from images acquired with different gains, then
//! maps each onto the common intensity scale.

use ndarray::Array4;
use voxaug::transforms::intensity::{histogram_apply, histogram_train, MaskSpec, DEFAULT_LANDMARK_PERCENTILES};
use voxaug::{AffineMatrix, Image, Rng, VoxelData};

fn scanner_image(gain: f32, offset: f32, seed: u64) -> Image {
    let mut rng = Rng::new(seed);
    let data = Array4::from_shape_fn((1, 24, 24, 24), |(_, i, j, k)| {
        let tissue = if (i + j + k) % 3 == 0 { 40.0 } else { 90.0 };
        gain * (tissue + rng.normal(0.0, 5.0) as f32) + offset
    });
    Image::scalar(data, AffineMatrix::identity())
}

fn main() -> voxaug::Result<()> {
    let images = [scanner_image(1.0, 0.0, 1), scanner_image(2.5, 30.0, 2), scanner_image(0.6, -10.0, 3)];
    let refs: Vec<&Image> = images.iter().collect();
    // Voxels above 0 stand in for a foreground mask.
    let table = histogram_train(&refs, &DEFAULT_LANDMARK_PERCENTILES, &MaskSpec::Threshold(0.0))?;
    println!("{}", serde_json::to_string_pretty(&table)?);

    for (n, image) in images.iter().enumerate() {
        let VoxelData::Scalar(data) = image.data()? else { unreachable!() };
        let out = histogram_apply(data, &table, None)?;
        let mean = |a: &Array4<f32>| a.mean().unwrap_or(0.0);
        println!("image {n}: mean {:.1} -> {:.1}", mean(data), mean(&out));
    }
    Ok(())
}
