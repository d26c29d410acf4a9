//! Simulates k-space spikes, ghosting, motion and a bias field on a phantom
//! and writes each result as NIfTI.

use ndarray::Array4;
use serde_json::json;
use voxaug::nifti::write_image;
use voxaug::{AffineMatrix, Image, PipelineSpec, Rng, Subject};

fn main() -> voxaug::Result<()> {
    let dir = std::env::temp_dir().join("voxaug-artifacts");
    std::fs::create_dir_all(&dir)?;
    let data = Array4::from_shape_fn((1, 64, 64, 24), |(_, i, j, _)| {
        let r = ((i as f32 - 32.0).powi(2) + (j as f32 - 32.0).powi(2)).sqrt();
        if r < 24.0 { 80.0 + 20.0 * ((i / 8 + j / 8) % 2) as f32 } else { 0.0 }
    });
    let phantom = Subject::new().with_image("t1", Image::scalar(data, AffineMatrix::identity()));

    let runs = [
        ("spike", json!({"type": "leaf", "name": "RandomSpike", "params": {"num_spikes": [2, 2]}})),
        ("ghosting", json!({"type": "leaf", "name": "Ghosting", "params": {"axis": 0, "num_ghosts": 6, "intensity": 0.8, "restore": 0.02}})),
        ("motion", json!({"type": "leaf", "name": "RandomMotion", "params": {"num_transforms": 3}})),
        ("bias", json!({"type": "leaf", "name": "RandomBiasField", "params": {"order": 3}})),
    ];
    for (name, node) in runs {
        let out = PipelineSpec::from_value(node)?.apply(phantom.clone(), &mut Rng::new(3))?;
        let path = dir.join(format!("{name}.nii.gz"));
        write_image(&out.images["t1"], &path)?;
        let params = out.history[0].to_json();
        println!("{name}: {} -> {}", params["resolved_params"], path.display());
    }
    Ok(())
}
