//! Two images of the same anatomy stored on different grids: detect the
//! mismatch, then resample the label map onto the scalar image's grid.

use ndarray::Array4;
use serde_json::json;
use voxaug::{AffineMatrix, Image, PipelineSpec, Rng, Subject};

fn main() -> voxaug::Result<()> {
    let mri = Image::scalar(Array4::from_elem((1, 181, 181, 1), 1.0), AffineMatrix::identity());
    let seg_affine = AffineMatrix::from_rows([
        [-2.0, 0.0, 0.0, 180.0],
        [0.0, 2.0, 0.0, -10.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])?;
    let mut seg = Array4::<u16>::zeros((1, 181, 181, 1));
    seg[[0, 20, 30, 0]] = 1;

    let subject = Subject::new()
        .with_image("mri", mri)
        .with_image("seg", Image::label(seg, seg_affine));
    println!("before: {:?}", subject.check_consistency()?);
    println!(
        "seg orientation {} vs mri {}",
        seg_affine.orientation_code(),
        subject.images["mri"].affine().orientation_code()
    );

    let resample = PipelineSpec::from_value(json!({
        "type": "leaf", "name": "Resample", "params": {"reference": "mri"}
    }))?;
    let aligned = resample.apply(subject, &mut Rng::new(0))?;
    println!("after: {:?}", aligned.check_consistency()?);

    let p = seg_affine.index_to_physical([20.0, 30.0, 0.0]);
    let idx = aligned.images["mri"].affine().physical_to_index(p)?;
    println!("landmark at {p:?} mm lands on MRI voxel {idx:?}");
    Ok(())
}
