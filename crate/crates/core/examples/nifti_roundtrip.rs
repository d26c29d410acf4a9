//! Writes a volume as `.nii` and `.nii.gz`, reads both back and prints the
//! header summary.

use ndarray::Array4;
use voxaug::nifti::{read_header, read_image, write_image};
use voxaug::{AffineMatrix, Image, ImageKind};

fn main() -> voxaug::Result<()> {
    let dir = std::env::temp_dir().join("voxaug-nifti-example");
    std::fs::create_dir_all(&dir)?;

    let affine = AffineMatrix::from_rows([
        [-0.9, 0.0, 0.0, 90.0],
        [0.0, 0.9, 0.0, -126.0],
        [0.0, 0.0, 1.2, -72.0],
        [0.0, 0.0, 0.0, 1.0],
    ])?;
    let data = Array4::from_shape_fn((1, 40, 48, 32), |(_, i, j, k)| (i * j + k) as f32 / 10.0);
    let image = Image::scalar(data, affine);

    for name in ["t1.nii", "t1.nii.gz"] {
        let path = dir.join(name);
        write_image(&image, &path)?;
        let back = read_image(&path, ImageKind::Scalar)?;
        let header = read_header(&path)?;
        println!(
            "{name}: {} bytes on disk, shape {:?}, datatype {}, orientation {}, spacing {:?}",
            std::fs::metadata(&path)?.len(),
            back.shape()?,
            header.datatype,
            back.affine().orientation_code(),
            back.spacing()
        );
        assert_eq!(back.data()?, image.data()?);
    }

    // Footprint without reading voxels.
    let lazy = Image::from_path(dir.join("t1.nii.gz"), ImageKind::Scalar);
    println!("in-memory footprint: {} bytes", lazy.memory_footprint()?);
    Ok(())
}
