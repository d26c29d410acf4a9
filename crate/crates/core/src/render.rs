//! 8-bit PNG rendering of single slices.
//!
//! A slice through `axis` spans the two remaining axes `(a, b)`, `a < b`.
//! Columns follow `a` and rows follow `b`, both increasing, so row 0 is
//! `b = 0`. Values are windowed linearly to 0..=255 with rounding; the
//! default window is the 1st to 99th percentile of the slice.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::transforms::intensity::percentile;

/// Slice of the first channel, indexed `[row, column]`.
pub fn slice(image: &Image, axis: usize, index: usize) -> Result<Array2<f32>> {
    if axis > 2 {
        return Err(Error::InvalidParameter(format!("axis {axis} is not a spatial axis")));
    }
    let data = image.data()?.to_f32();
    let len = data.shape()[axis + 1];
    if index >= len {
        return Err(Error::SliceOutOfBounds { axis, index, len });
    }
    let plane = data.index_axis(Axis(0), 0).index_axis(Axis(axis), index).to_owned();
    // `plane` is [a][b]; rows follow b.
    Ok(plane.reversed_axes())
}

/// Default display window: 1st and 99th percentiles.
pub fn default_window(values: &Array2<f32>) -> [f64; 2] {
    let mut v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
    v.sort_by(f64::total_cmp);
    [percentile(&v, 1.0), percentile(&v, 99.0)]
}

pub fn to_gray8(values: &Array2<f32>, window: [f64; 2]) -> Vec<u8> {
    let [lo, hi] = window;
    values
        .iter()
        .map(|&v| {
            if !(hi > lo) {
                return 0;
            }
            ((v as f64 - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

pub fn encode_png(pixels: &[u8], width: usize, height: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer.write_image_data(pixels).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    Ok(out)
}

/// PNG of one slice.
pub fn render_slice(image: &Image, axis: usize, index: usize, window: Option<[f64; 2]>) -> Result<Vec<u8>> {
    let s = slice(image, axis, index)?;
    let window = window.unwrap_or_else(|| default_window(&s));
    let (rows, cols) = s.dim();
    encode_png(&to_gray8(&s, window), cols, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::AffineMatrix;
    use ndarray::Array4;

    #[test]
    fn rows_follow_second_axis() {
        let img = Image::scalar(
            Array4::from_shape_fn((1, 3, 4, 2), |(_, i, j, k)| (i * 100 + j * 10 + k) as f32),
            AffineMatrix::identity(),
        );
        let s = slice(&img, 2, 1).unwrap();
        assert_eq!(s.dim(), (4, 3));
        assert_eq!(s[[2, 1]], 121.0);
        assert!(matches!(slice(&img, 0, 3), Err(Error::SliceOutOfBounds { .. })));
    }

    #[test]
    fn window_maps_to_full_range() {
        let v = Array2::from_shape_vec((1, 3), vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(to_gray8(&v, [0.0, 1.0]), vec![0, 128, 255]);
    }
}
