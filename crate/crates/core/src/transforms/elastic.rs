//! Cubic B-spline displacement fields.
//!
//! Control node `p` of an axis with `N` nodes sits at voxel index
//! `p * (n - 1) / (N - 1)`. Nodes outside the grid contribute nothing, so
//! with two locked border layers the field vanishes on the image boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::Interpolation;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticParams {
    pub grid_shape: [usize; 3],
    /// Displacements in mm along the image axes, laid out as
    /// `[gx][gy][gz][component]`.
    pub displacements: Vec<f64>,
    pub interpolation: Interpolation,
    pub pad_value: f32,
}

impl Default for ElasticParams {
    fn default() -> Self {
        ElasticParams {
            grid_shape: [4, 4, 4],
            displacements: vec![0.0; 4 * 4 * 4 * 3],
            interpolation: Interpolation::Linear,
            pad_value: 0.0,
        }
    }
}

impl ElasticParams {
    pub fn validate(&self) -> Result<()> {
        if self.grid_shape.iter().any(|&n| n < 4) {
            return Err(Error::InvalidParameter("elastic grid needs at least 4 nodes per axis".into()));
        }
        let expected = self.grid_shape.iter().product::<usize>() * 3;
        if self.displacements.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "elastic grid {:?} needs {expected} displacement values, got {}",
                self.grid_shape,
                self.displacements.len()
            )));
        }
        if self.displacements.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter("non-finite elastic displacement".into()));
        }
        Ok(())
    }

    fn node(&self, g: [usize; 3]) -> [f64; 3] {
        let [_, ny, nz] = self.grid_shape;
        let base = ((g[0] * ny + g[1]) * nz + g[2]) * 3;
        [self.displacements[base], self.displacements[base + 1], self.displacements[base + 2]]
    }
}

/// Uniform B-spline basis weights for the nodes `base-1 ..= base+2`.
pub fn bspline_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        (1.0 - t).powi(3) / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Contributing `(node, weight)` pairs for every voxel along one axis.
fn axis_weights(n: usize, nodes: usize) -> Vec<Vec<(usize, f64)>> {
    (0..n)
        .map(|i| {
            let u = if n > 1 {
                i as f64 * (nodes - 1) as f64 / (n - 1) as f64
            } else {
                0.0
            };
            let base = (u.floor() as isize).min(nodes as isize - 2).max(0);
            let t = u - base as f64;
            bspline_weights(t)
                .iter()
                .enumerate()
                .filter_map(|(o, &w)| {
                    let node = base - 1 + o as isize;
                    (node >= 0 && (node as usize) < nodes && w != 0.0).then_some((node as usize, w))
                })
                .collect()
        })
        .collect()
}

/// Dense displacement in mm at every voxel, flattened in `[x][y][z]` order.
pub fn dense_displacement(p: &ElasticParams, shape: [usize; 3]) -> Vec<[f64; 3]> {
    let [gx, gy, gz] = p.grid_shape;
    let [nx, ny, nz] = shape;
    let (wx, wy, wz) = (axis_weights(nx, gx), axis_weights(ny, gy), axis_weights(nz, gz));
    let add = |acc: &mut [f64; 3], w: f64, v: [f64; 3]| {
        for c in 0..3 {
            acc[c] += w * v[c];
        }
    };
    // Contract one axis at a time.
    let mut t1 = vec![[0.0; 3]; nx * gy * gz];
    for i in 0..nx {
        for b in 0..gy {
            for c in 0..gz {
                let acc = &mut t1[(i * gy + b) * gz + c];
                for &(a, w) in &wx[i] {
                    add(acc, w, p.node([a, b, c]));
                }
            }
        }
    }
    let mut t2 = vec![[0.0; 3]; nx * ny * gz];
    for i in 0..nx {
        for j in 0..ny {
            for c in 0..gz {
                let mut acc = [0.0; 3];
                for &(b, w) in &wy[j] {
                    add(&mut acc, w, t1[(i * gy + b) * gz + c]);
                }
                t2[(i * ny + j) * gz + c] = acc;
            }
        }
    }
    let mut out = vec![[0.0; 3]; nx * ny * nz];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let mut acc = [0.0; 3];
                for &(c, w) in &wz[k] {
                    add(&mut acc, w, t2[(i * ny + j) * gz + c]);
                }
                out[(i * ny + j) * nz + k] = acc;
            }
        }
    }
    out
}

/// Dense displacement converted to voxel units; components along singleton
/// axes are dropped.
pub fn dense_index_displacement(p: &ElasticParams, shape: [usize; 3], spacing: [f64; 3]) -> Vec<[f64; 3]> {
    let mut field = dense_displacement(p, shape);
    for d in &mut field {
        for a in 0..3 {
            d[a] = if shape[a] > 1 { d[a] / spacing[a] } else { 0.0 };
        }
    }
    field
}

/// Draws a control grid with components uniform in `[-max, max)`. Nodes in
/// the outer `locked` layers and components along singleton image axes are
/// zero. Every node consumes three draws regardless.
pub fn random_control_grid(grid: [usize; 3], max: f64, locked: usize, shape: [usize; 3], rng: &mut Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.iter().product::<usize>() * 3);
    let is_locked = |g: usize, n: usize| g < locked || g + locked >= n;
    for a in 0..grid[0] {
        for b in 0..grid[1] {
            for c in 0..grid[2] {
                let frozen = is_locked(a, grid[0]) || is_locked(b, grid[1]) || is_locked(c, grid[2]);
                for comp in 0..3 {
                    let v = rng.uniform_range(-max, max);
                    out.push(if frozen || shape[comp] == 1 { 0.0 } else { v });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_partition_unity() {
        for t in [0.0, 0.25, 0.5, 0.99] {
            let w = bspline_weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn locked_borders_vanish_on_boundary() {
        let mut rng = Rng::new(4);
        let grid = [7, 7, 7];
        let shape = [20, 17, 9];
        let p = ElasticParams {
            grid_shape: grid,
            displacements: random_control_grid(grid, 5.0, 2, shape, &mut rng),
            ..ElasticParams::default()
        };
        let f = dense_displacement(&p, shape);
        let [nx, ny, nz] = shape;
        let mut interior_max = 0.0f64;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let d = f[(i * ny + j) * nz + k];
                    let boundary = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                    if boundary {
                        assert!(d.iter().all(|v| v.abs() < 1e-12), "{i} {j} {k} {d:?}");
                    } else {
                        interior_max = interior_max.max(d[0].abs());
                    }
                }
            }
        }
        assert!(interior_max > 0.0);
    }

    #[test]
    fn constant_grid_gives_interior_constant() {
        // Away from the virtual zero nodes a constant grid reproduces itself.
        let grid = [8, 8, 8];
        let p = ElasticParams {
            grid_shape: grid,
            displacements: vec![1.5; 8 * 8 * 8 * 3],
            ..ElasticParams::default()
        };
        let f = dense_displacement(&p, [15, 15, 15]);
        let d = f[(7 * 15 + 7) * 15 + 7];
        assert!((d[0] - 1.5).abs() < 1e-12);
    }
}
