//! Builds an augmentation pipeline from JSON, applies it to a subject with a
//! scalar image and a label map, and prints the resolved history.

use ndarray::Array4;
use voxaug::{history_as_pipeline, AffineMatrix, Image, PipelineSpec, Rng, Subject};

const PIPELINE: &str = r#"{
  "type": "compose",
  "children": [
    {"type": "leaf", "name": "ToCanonical"},
    {"type": "leaf", "name": "RescaleIntensity", "params": {"out_min_max": [0, 1], "percentiles": [0.5, 99.5]}},
    {"type": "leaf", "name": "RandomFlip", "params": {"axes": [0]}},
    {"type": "one_of", "p": 0.8, "children": [
      {"weight": 0.8, "node": {"type": "leaf", "name": "RandomAffine"}},
      {"weight": 0.2, "node": {"type": "leaf", "name": "RandomElasticDeformation"}}
    ]},
    {"type": "leaf", "name": "RandomBiasField"},
    {"type": "leaf", "name": "RandomNoise"}
  ]
}"#;

fn main() -> voxaug::Result<()> {
    let shape = (1, 48, 48, 40);
    let t1 = Array4::from_shape_fn(shape, |(_, i, j, k)| {
        let d = ((i as f32 - 24.0).powi(2) + (j as f32 - 24.0).powi(2) + (k as f32 - 20.0).powi(2)).sqrt();
        if d < 15.0 { 100.0 - d } else { 5.0 }
    });
    let seg = t1.mapv(|v| (v > 50.0) as u16);
    let affine = AffineMatrix::diagonal(1.0, 1.0, 1.2)?;
    let subject = Subject::new()
        .with_image("t1", Image::scalar(t1, affine))
        .with_image("seg", Image::label(seg, affine));

    let spec = PipelineSpec::from_json(PIPELINE)?;
    let out = spec.apply(subject, &mut Rng::new(7))?;
    for entry in &out.history {
        println!("{}", serde_json::to_string(&entry.to_json())?);
    }
    println!("replayable pipeline:\n{}", history_as_pipeline(&out).to_json_pretty()?);
    Ok(())
}
