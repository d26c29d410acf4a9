//! Renders a windowed PNG of one slice before and after augmentation, the same
//! way the preview service does.

use ndarray::Array4;
use voxaug::render::render_slice;
use voxaug::{AffineMatrix, Image, PipelineSpec, Rng, Subject};

fn main() -> voxaug::Result<()> {
    let dir = std::env::temp_dir().join("voxaug-preview");
    std::fs::create_dir_all(&dir)?;
    let data = Array4::from_shape_fn((1, 96, 80, 20), |(_, i, j, _)| {
        let r = ((i as f32 - 48.0).powi(2) / 1600.0 + (j as f32 - 40.0).powi(2) / 900.0).sqrt();
        if r < 1.0 { 200.0 * (1.0 - r) } else { 0.0 }
    });
    let subject = Subject::new().with_image("image", Image::scalar(data, AffineMatrix::identity()));
    let spec = PipelineSpec::from_json(
        r#"{"type":"compose","children":[
            {"type":"leaf","name":"RandomAffine","params":{"degrees":[-20,20]}},
            {"type":"leaf","name":"RandomGhosting"}]}"#,
    )?;
    let out = spec.apply(subject.clone(), &mut Rng::new(5))?;
    for (name, s) in [("before", &subject), ("after", &out)] {
        let png = render_slice(&s.images["image"], 2, 10, None)?;
        let path = dir.join(format!("{name}.png"));
        std::fs::write(&path, png)?;
        println!("{}", path.display());
    }
    Ok(())
}
