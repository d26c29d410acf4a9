//! Interpolation of voxel arrays at continuous indices.
//!
//! Voxel values sit at voxel centres. A continuous index `q` along an axis of
//! length `n` is inside the field of view when `-0.5 <= q < n - 0.5`; inside
//! that band trilinear interpolation clamps `q` to `[0, n - 1]`.

use ndarray::{Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::affine::AffineMatrix;
use crate::error::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    #[default]
    #[serde(alias = "trilinear")]
    Linear,
}

/// What reads outside the field of view return.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Constant(f32),
    /// Replicate the nearest edge voxel.
    Edge,
}

#[inline]
fn axis_inside(q: f64, n: usize) -> bool {
    q >= -0.5 && q < n as f64 - 0.5
}

/// Samples one channel at continuous index `q`.
#[inline]
pub fn sample(volume: &ArrayView3<f32>, q: [f64; 3], interp: Interpolation, boundary: Boundary) -> f32 {
    let dims = volume.dim();
    let n = [dims.0, dims.1, dims.2];
    let mut q = q;
    for a in 0..3 {
        if !axis_inside(q[a], n[a]) {
            match boundary {
                Boundary::Constant(v) => return v,
                Boundary::Edge => {}
            }
        }
        if q[a].is_nan() {
            return match boundary {
                Boundary::Constant(v) => v,
                Boundary::Edge => volume[[0, 0, 0]],
            };
        }
        q[a] = q[a].clamp(0.0, (n[a] - 1) as f64);
    }
    match interp {
        Interpolation::Nearest => {
            let i = (q[0] + 0.5).floor() as usize;
            let j = (q[1] + 0.5).floor() as usize;
            let k = (q[2] + 0.5).floor() as usize;
            volume[[i.min(n[0] - 1), j.min(n[1] - 1), k.min(n[2] - 1)]]
        }
        Interpolation::Linear => {
            let mut base = [0usize; 3];
            let mut frac = [0f64; 3];
            for a in 0..3 {
                let f = q[a].floor();
                let mut b = f as usize;
                let mut t = q[a] - f;
                if b + 1 >= n[a] {
                    // At the last voxel (or a singleton axis).
                    b = n[a] - 1;
                    t = 0.0;
                }
                base[a] = b;
                frac[a] = t;
            }
            let mut acc = 0.0f64;
            for (di, wi) in [(0usize, 1.0 - frac[0]), (1, frac[0])] {
                if wi == 0.0 {
                    continue;
                }
                for (dj, wj) in [(0usize, 1.0 - frac[1]), (1, frac[1])] {
                    if wj == 0.0 {
                        continue;
                    }
                    for (dk, wk) in [(0usize, 1.0 - frac[2]), (1, frac[2])] {
                        if wk == 0.0 {
                            continue;
                        }
                        let v = volume[[base[0] + di, base[1] + dj, base[2] + dk]] as f64;
                        acc += wi * wj * wk * v;
                    }
                }
            }
            acc as f32
        }
    }
}

/// Resamples every channel of `src` onto an output grid, where the source
/// index for output index `o` is `index_map(o)`.
pub fn resample_with<F>(
    src: &Array4<f32>,
    out_shape: [usize; 3],
    interp: Interpolation,
    boundary: Boundary,
    index_map: F,
) -> Array4<f32>
where
    F: Fn([usize; 3]) -> [f64; 3],
{
    let channels = src.shape()[0];
    let [nx, ny, nz] = out_shape;
    // Source positions are shared by all channels.
    let mut coords = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                coords.push(index_map([i, j, k]));
            }
        }
    }
    let mut out = Array4::<f32>::zeros((channels, nx, ny, nz));
    for (c, mut out_c) in out.axis_iter_mut(Axis(0)).enumerate() {
        let vol = src.index_axis(Axis(0), c);
        for (dst, q) in out_c.iter_mut().zip(coords.iter()) {
            *dst = sample(&vol, *q, interp, boundary);
        }
    }
    out
}

/// Matrix taking output indices to source indices for grids related by a
/// physical-space map `source_point = world_map * output_point`.
pub fn index_mapping(
    src_affine: &AffineMatrix,
    out_affine: &AffineMatrix,
    world_map: Option<&AffineMatrix>,
) -> Result<nalgebra::Matrix4<f64>> {
    let src_inv = src_affine.inverse()?;
    let w = world_map.map(|m| *m.matrix()).unwrap_or_else(nalgebra::Matrix4::identity);
    Ok(src_inv.matrix() * w * out_affine.matrix())
}

/// Resamples `src` (grid `src_affine`) onto the grid `(out_shape, out_affine)`,
/// optionally through a physical-space map from output points to source points.
pub fn resample_affine(
    src: &Array4<f32>,
    src_affine: &AffineMatrix,
    out_shape: [usize; 3],
    out_affine: &AffineMatrix,
    world_map: Option<&AffineMatrix>,
    interp: Interpolation,
    boundary: Boundary,
) -> Result<Array4<f32>> {
    let m = index_mapping(src_affine, out_affine, world_map)?;
    Ok(resample_with(src, out_shape, interp, boundary, |[i, j, k]| {
        let (i, j, k) = (i as f64, j as f64, k as f64);
        [
            m[(0, 0)] * i + m[(0, 1)] * j + m[(0, 2)] * k + m[(0, 3)],
            m[(1, 0)] * i + m[(1, 1)] * j + m[(1, 2)] * k + m[(1, 3)],
            m[(2, 0)] * i + m[(2, 1)] * j + m[(2, 2)] * k + m[(2, 3)],
        ]
    }))
}
