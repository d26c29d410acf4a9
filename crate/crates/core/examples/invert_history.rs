//! Applies spatial and intensity augmentation, then maps the result back to
//! the original grid with the inverse of the recorded history.

use ndarray::Array4;
use serde_json::json;
use voxaug::{invert_history, AffineMatrix, Image, PipelineSpec, Rng, Subject, VoxelData};

fn main() -> voxaug::Result<()> {
    let data = Array4::from_shape_fn((1, 32, 32, 32), |(_, i, j, k)| {
        let d2 = (i as f32 - 16.0).powi(2) + (j as f32 - 14.0).powi(2) + (k as f32 - 17.0).powi(2);
        100.0 * (-d2 / 50.0).exp()
    });
    let subject = Subject::new().with_image("t1", Image::scalar(data.clone(), AffineMatrix::identity()));

    let spec = PipelineSpec::from_value(json!({"type": "compose", "children": [
        {"type": "leaf", "name": "Flip", "params": {"axes": [1]}},
        {"type": "leaf", "name": "Pad", "params": {"low": [4, 4, 4], "high": [4, 4, 4]}},
        {"type": "leaf", "name": "RandomAffine", "params": {"degrees": [-15, 15]}},
        {"type": "leaf", "name": "RandomNoise"}
    ]}))?;
    let augmented = spec.apply(subject, &mut Rng::new(11))?;

    let (inverse, discarded) = invert_history(&augmented);
    println!("inverse: {}", inverse.to_json_pretty()?);
    println!("{discarded} non-invertible step(s) skipped");

    let restored = inverse.apply(augmented, &mut Rng::new(0))?;
    let VoxelData::Scalar(back) = restored.images["t1"].data()? else { unreachable!() };
    let mae = (back - &data).mapv(f32::abs).mean().unwrap_or(0.0);
    println!("shape {:?}, mean absolute error {mae:.4} (intensity range 0..100)", back.shape());
    Ok(())
}
