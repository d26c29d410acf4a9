//! Centered 3D Fourier transforms. The zero-frequency bin of an axis of
//! length `n` sits at index `n / 2`.

use ndarray::{Array3, ArrayView3, Axis};
use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

fn transform_axis(data: &mut Array3<Complex64>, axis: usize, direction: FftDirection, planner: &mut FftPlanner<f64>) {
    let n = data.shape()[axis];
    if n == 1 {
        return;
    }
    let fft = planner.plan_fft(n, direction);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for mut lane in data.lanes_mut(Axis(axis)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = *b;
        }
    }
}

/// Moves index 0 to `n / 2` along every axis.
pub fn fftshift(data: &Array3<Complex64>) -> Array3<Complex64> {
    let (nx, ny, nz) = data.dim();
    Array3::from_shape_fn((nx, ny, nz), |(i, j, k)| {
        data[[(i + nx - nx / 2) % nx, (j + ny - ny / 2) % ny, (k + nz - nz / 2) % nz]]
    })
}

/// Inverse of [`fftshift`].
pub fn ifftshift(data: &Array3<Complex64>) -> Array3<Complex64> {
    let (nx, ny, nz) = data.dim();
    Array3::from_shape_fn((nx, ny, nz), |(i, j, k)| data[[(i + nx / 2) % nx, (j + ny / 2) % ny, (k + nz / 2) % nz]])
}

/// Unnormalized forward DFT with the DC bin moved to the centre.
pub fn fft3(channel: &ArrayView3<f32>) -> Array3<Complex64> {
    let mut data = channel.mapv(|v| Complex64::new(v as f64, 0.0));
    let mut planner = FftPlanner::new();
    for a in 0..3 {
        transform_axis(&mut data, a, FftDirection::Forward, &mut planner);
    }
    fftshift(&data)
}

/// Inverse of [`fft3`], including the `1 / N` normalization.
pub fn ifft3(kspace: &Array3<Complex64>) -> Array3<Complex64> {
    let mut data = ifftshift(kspace);
    let mut planner = FftPlanner::new();
    for a in 0..3 {
        transform_axis(&mut data, a, FftDirection::Inverse, &mut planner);
    }
    let scale = 1.0 / data.len() as f64;
    data.mapv_inplace(|v| v * scale);
    data
}

/// Magnitude of the inverse transform, as used by the k-space artifacts.
pub fn ifft3_magnitude(kspace: &Array3<Complex64>) -> Array3<f32> {
    ifft3(kspace).mapv(|v| v.norm() as f32)
}
