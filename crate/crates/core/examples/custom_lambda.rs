//! Mixes a user-supplied closure into a pipeline. Lambdas run in memory only
//! and cannot be written out as JSON.

use ndarray::Array4;
use voxaug::{AffineMatrix, Image, ImageKind, PipelineSpec, Rng, Subject};

fn main() -> voxaug::Result<()> {
    let data = Array4::from_shape_fn((1, 16, 16, 16), |(_, i, j, k)| (i + j + k) as f32 - 20.0);
    let subject = Subject::new().with_image("ct", Image::scalar(data, AffineMatrix::identity()));

    let spec = PipelineSpec::compose([
        PipelineSpec::lambda(&[ImageKind::Scalar], |a| a.mapv(|v| v.clamp(-10.0, 10.0))),
        PipelineSpec::from_json(r#"{"type":"leaf","name":"RescaleIntensity"}"#)?,
    ]);
    let out = spec.apply(subject, &mut Rng::new(0))?;
    for entry in &out.history {
        println!("{} invertible={}", entry.name, entry.invertible);
    }
    match spec.to_json_pretty() {
        Ok(_) => println!("serialized"),
        Err(e) => println!("not serializable: {e}"),
    }
    Ok(())
}
