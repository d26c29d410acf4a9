//! MRI artifacts: k-space spikes, ghosting and motion, plus a smooth
//! multiplicative bias field. Scalar images only.

use ndarray::{Array3, Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use super::fft::{fft3, ifft3_magnitude};
use super::intensity::map_scalars;
use super::spatial::{check_axes, check_range, compose_affine};
use super::{Executed, Transform};
use crate::affine::AffineMatrix;
use crate::error::{Error, Result};
use crate::image::{ImageKind, Subject, VoxelData};
use crate::resample::{resample_affine, Boundary, Interpolation};
use crate::rng::Rng;

fn each_channel(data: &Array4<f32>, mut f: impl FnMut(ArrayView3<f32>) -> Result<Array3<f32>>) -> Result<Array4<f32>> {
    let mut out = data.clone();
    for (c, mut dst) in out.axis_iter_mut(Axis(0)).enumerate() {
        dst.assign(&f(data.index_axis(Axis(0), c))?);
    }
    Ok(out)
}

fn scalar(img: &crate::image::Image) -> Result<&Array4<f32>> {
    match img.data()? {
        VoxelData::Scalar(a) => Ok(a),
        VoxelData::Label(_) => Err(Error::InvalidParameter("expected a scalar image".into())),
    }
}

fn first_scalar_shape(subject: &Subject) -> Result<Option<[usize; 3]>> {
    subject
        .images
        .values()
        .find(|i| i.kind() == ImageKind::Scalar)
        .map(|i| i.spatial_shape())
        .transpose()
}

// --- Spike ---

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikePoint {
    /// k-space position relative to the zero-frequency bin.
    pub offset: [i64; 3],
    /// Added magnitude as a multiple of the spectrum's maximum magnitude.
    pub intensity: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeParams {
    pub spikes: Vec<SpikePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSpikeParams {
    pub num_spikes: [i64; 2],
    pub intensity: [f64; 2],
}

impl Default for RandomSpikeParams {
    fn default() -> Self {
        RandomSpikeParams {
            num_spikes: [1, 1],
            intensity: [1.0, 3.0],
        }
    }
}

pub fn spike_channel(x: ArrayView3<f32>, spikes: &[SpikePoint]) -> Result<Array3<f32>> {
    if spikes.is_empty() {
        return Ok(x.to_owned());
    }
    let mut k = fft3(&x);
    let (nx, ny, nz) = k.dim();
    let n = [nx, ny, nz];
    let peak = k.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for s in spikes {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let p = (n[a] / 2) as i64 + s.offset[a];
            if p < 0 || p >= n[a] as i64 {
                return Err(Error::InvalidParameter(format!("spike offset {:?} outside k-space", s.offset)));
            }
            idx[a] = p as usize;
        }
        k[idx].re += s.intensity * peak;
    }
    Ok(ifft3_magnitude(&k))
}

pub(super) fn resolve_spike(p: &RandomSpikeParams, subject: &Subject, rng: &mut Rng) -> Result<Transform> {
    if p.num_spikes[0] < 0 || p.num_spikes[0] > p.num_spikes[1] {
        return Err(Error::InvalidParameter("num_spikes range is invalid".into()));
    }
    check_range("intensity", p.intensity)?;
    let count = rng.int_inclusive(p.num_spikes[0], p.num_spikes[1]) as usize;
    let Some(shape) = first_scalar_shape(subject)? else {
        return Ok(Transform::Spike(SpikeParams::default()));
    };
    let total: usize = shape.iter().product();
    if total < 2 {
        return Ok(Transform::Spike(SpikeParams::default()));
    }
    let centre = shape.map(|n| n / 2);
    let dc = (centre[0] * shape[1] + centre[1]) * shape[2] + centre[2];
    let mut spikes = Vec::with_capacity(count);
    for _ in 0..count {
        let mut flat = rng.below(total as u64 - 1) as usize;
        if flat >= dc {
            flat += 1;
        }
        let idx = [flat / (shape[1] * shape[2]), (flat / shape[2]) % shape[1], flat % shape[2]];
        let offset = [0, 1, 2].map(|a| idx[a] as i64 - centre[a] as i64);
        spikes.push(SpikePoint {
            offset,
            intensity: rng.uniform_range(p.intensity[0], p.intensity[1]),
        });
    }
    Ok(Transform::Spike(SpikeParams { spikes }))
}

pub(super) fn execute_spike(p: &SpikeParams, mut subject: Subject) -> Result<Executed> {
    map_scalars(&mut subject, |_, _, img| each_channel(scalar(img)?, |ch| spike_channel(ch, &p.spikes)))?;
    Ok(Executed::not_invertible(subject))
}

// --- Ghosting ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhostingParams {
    pub axis: usize,
    /// Every `num_ghosts`-th k-space plane is attenuated.
    pub num_ghosts: usize,
    /// Attenuation `s`; affected planes are multiplied by `1 - s`.
    pub intensity: f64,
    /// Planes within `floor(restore * N)` of the centre are left alone.
    pub restore: f64,
}

impl Default for GhostingParams {
    fn default() -> Self {
        GhostingParams {
            axis: 0,
            num_ghosts: 4,
            intensity: 0.5,
            restore: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomGhostingParams {
    pub num_ghosts: [i64; 2],
    pub axes: Vec<usize>,
    pub intensity: [f64; 2],
    pub restore: f64,
}

impl Default for RandomGhostingParams {
    fn default() -> Self {
        RandomGhostingParams {
            num_ghosts: [4, 10],
            axes: vec![0, 1, 2],
            intensity: [0.5, 1.0],
            restore: 0.02,
        }
    }
}

/// Plane indices along an axis of length `n` that ghosting attenuates.
pub fn ghosted_planes(n: usize, num_ghosts: usize, restore: f64) -> Vec<usize> {
    let protect = (restore * n as f64).floor() as usize;
    let centre = n / 2;
    (0..n)
        .filter(|&j| j % num_ghosts == 0 && j.abs_diff(centre) > protect)
        .collect()
}

impl GhostingParams {
    fn validate(&self) -> Result<()> {
        check_axes(&[self.axis])?;
        if self.num_ghosts < 2 {
            return Err(Error::InvalidParameter("num_ghosts must be at least 2".into()));
        }
        if !(0.0..0.5).contains(&self.restore) {
            return Err(Error::InvalidParameter("restore must be in [0, 0.5)".into()));
        }
        if !(self.intensity >= 0.0) {
            return Err(Error::InvalidParameter("ghosting intensity must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn ghost_channel(x: ArrayView3<f32>, p: &GhostingParams) -> Array3<f32> {
    if p.intensity == 0.0 {
        return x.to_owned();
    }
    let mut k = fft3(&x);
    let factor = 1.0 - p.intensity;
    for j in ghosted_planes(k.shape()[p.axis], p.num_ghosts, p.restore) {
        k.index_axis_mut(Axis(p.axis), j).mapv_inplace(|v| v * factor);
    }
    ifft3_magnitude(&k)
}

pub(super) fn resolve_ghosting(p: &RandomGhostingParams, rng: &mut Rng) -> Result<Transform> {
    check_axes(&p.axes)?;
    if p.axes.is_empty() || p.num_ghosts[0] < 2 || p.num_ghosts[0] > p.num_ghosts[1] {
        return Err(Error::InvalidParameter("ghosting needs axes and num_ghosts >= 2".into()));
    }
    check_range("intensity", p.intensity)?;
    let num_ghosts = rng.int_inclusive(p.num_ghosts[0], p.num_ghosts[1]) as usize;
    let axis = p.axes[rng.below(p.axes.len() as u64) as usize];
    let intensity = rng.uniform_range(p.intensity[0], p.intensity[1]);
    let g = GhostingParams {
        axis,
        num_ghosts,
        intensity,
        restore: p.restore,
    };
    g.validate()?;
    Ok(Transform::Ghosting(g))
}

pub(super) fn execute_ghosting(p: &GhostingParams, mut subject: Subject) -> Result<Executed> {
    p.validate()?;
    map_scalars(&mut subject, |_, _, img| each_channel(scalar(img)?, |ch| Ok(ghost_channel(ch, p))))?;
    Ok(Executed::not_invertible(subject))
}

// --- Motion ---

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigidMotion {
    pub degrees: [f64; 3],
    /// Millimetres.
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    /// k-space axis split into time segments.
    pub axis: usize,
    pub transforms: Vec<RigidMotion>,
    /// Sorted times in `[0, 1]`, one per transform; segment `s` starts at
    /// plane `round(times[s-1] * N)`.
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMotionParams {
    pub degrees: [f64; 2],
    pub translation: [f64; 2],
    pub num_transforms: usize,
}

impl Default for RandomMotionParams {
    fn default() -> Self {
        RandomMotionParams {
            degrees: [-10.0, 10.0],
            translation: [-10.0, 10.0],
            num_transforms: 2,
        }
    }
}

impl MotionParams {
    fn validate(&self) -> Result<()> {
        check_axes(&[self.axis])?;
        if self.times.len() != self.transforms.len() {
            return Err(Error::InvalidParameter("motion needs one time per transform".into()));
        }
        if self.times.iter().any(|t| !(0.0..=1.0).contains(t)) || self.times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("motion times must be sorted within [0, 1]".into()));
        }
        Ok(())
    }

    /// Plane ranges `[start, end)` for each time segment.
    pub fn segments(&self, n: usize) -> Vec<(usize, usize)> {
        let mut bounds = vec![0usize];
        bounds.extend(self.times.iter().map(|t| ((t * n as f64).round() as usize).min(n)));
        bounds.push(n);
        bounds.windows(2).map(|w| (w[0], w[1].max(w[0]))).collect()
    }
}

pub fn motion_channel(x: ArrayView3<f32>, affine: &AffineMatrix, p: &MotionParams) -> Result<Array3<f32>> {
    if p.transforms.is_empty() {
        return Ok(x.to_owned());
    }
    let (nx, ny, nz) = x.dim();
    let shape = [nx, ny, nz];
    let centre = affine.index_to_physical(shape.map(|n| (n as f64 - 1.0) / 2.0));
    let src = x.to_owned().insert_axis(Axis(0));
    let n_axis = shape[p.axis];
    let segments = p.segments(n_axis);
    let mut out = fft3(&x);
    for (s, &(start, end)) in segments.iter().enumerate().skip(1) {
        if start == end {
            continue;
        }
        let m = &p.transforms[s - 1];
        let forward = compose_affine([1.0; 3], m.degrees, m.translation, centre)?;
        let moved = resample_affine(
            &src,
            affine,
            shape,
            affine,
            Some(&forward.inverse()?),
            Interpolation::Linear,
            Boundary::Edge,
        )?;
        let k = fft3(&moved.index_axis(Axis(0), 0));
        for j in start..end {
            out.index_axis_mut(Axis(p.axis), j).assign(&k.index_axis(Axis(p.axis), j));
        }
    }
    Ok(ifft3_magnitude(&out))
}

pub(super) fn resolve_motion(p: &RandomMotionParams, rng: &mut Rng) -> Result<Transform> {
    check_range("degrees", p.degrees)?;
    check_range("translation", p.translation)?;
    if p.num_transforms < 1 {
        return Err(Error::InvalidParameter("num_transforms must be at least 1".into()));
    }
    let transforms = (0..p.num_transforms)
        .map(|_| RigidMotion {
            degrees: [0; 3].map(|_| rng.uniform_range(p.degrees[0], p.degrees[1])),
            translation: [0; 3].map(|_| rng.uniform_range(p.translation[0], p.translation[1])),
        })
        .collect();
    let mut times: Vec<f64> = (0..p.num_transforms).map(|_| rng.uniform()).collect();
    times.sort_by(f64::total_cmp);
    let axis = rng.below(3) as usize;
    Ok(Transform::Motion(MotionParams { axis, transforms, times }))
}

pub(super) fn execute_motion(p: &MotionParams, mut subject: Subject) -> Result<Executed> {
    p.validate()?;
    map_scalars(&mut subject, |_, _, img| {
        let affine = *img.affine();
        each_channel(scalar(img)?, |ch| motion_channel(ch, &affine, p))
    })?;
    Ok(Executed::not_invertible(subject))
}

// --- BiasField ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasFieldParams {
    pub order: usize,
    /// One coefficient per monomial `x^i y^j z^k`, `i + j + k <= order`,
    /// ordered by `i`, then `j`, then `k`.
    pub coefficients: Vec<f64>,
}

impl Default for BiasFieldParams {
    fn default() -> Self {
        BiasFieldParams {
            order: 0,
            coefficients: vec![0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomBiasFieldParams {
    pub coefficients: [f64; 2],
    pub order: usize,
}

impl Default for RandomBiasFieldParams {
    fn default() -> Self {
        RandomBiasFieldParams {
            coefficients: [-0.5, 0.5],
            order: 3,
        }
    }
}

/// Exponents of the polynomial terms, in coefficient order.
pub fn monomials(order: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for i in 0..=order {
        for j in 0..=order - i {
            for k in 0..=order - i - j {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Voxel coordinate along an axis mapped to `[-1, 1]`.
pub fn normalized_coordinate(i: usize, n: usize) -> f64 {
    if n > 1 {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    } else {
        0.0
    }
}

/// `exp` of the polynomial at every voxel.
pub fn bias_field(shape: [usize; 3], order: usize, coefficients: &[f64]) -> Result<Array3<f64>> {
    let terms = monomials(order);
    if terms.len() != coefficients.len() {
        return Err(Error::InvalidParameter(format!(
            "order {order} needs {} coefficients, got {}",
            terms.len(),
            coefficients.len()
        )));
    }
    let powers: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|a| {
            (0..shape[a])
                .map(|i| {
                    let x = normalized_coordinate(i, shape[a]);
                    (0..=order).map(|p| x.powi(p as i32)).collect()
                })
                .collect()
        })
        .collect();
    Ok(Array3::from_shape_fn((shape[0], shape[1], shape[2]), |(i, j, k)| {
        let mut s = 0.0;
        for (t, c) in terms.iter().zip(coefficients) {
            s += c * powers[0][i][t[0]] * powers[1][j][t[1]] * powers[2][k][t[2]];
        }
        s.exp()
    }))
}

pub(super) fn resolve_bias(p: &RandomBiasFieldParams, rng: &mut Rng) -> Result<Transform> {
    check_range("coefficients", p.coefficients)?;
    let coefficients = monomials(p.order)
        .iter()
        .map(|_| rng.uniform_range(p.coefficients[0], p.coefficients[1]))
        .collect();
    Ok(Transform::BiasField(BiasFieldParams {
        order: p.order,
        coefficients,
    }))
}

pub(super) fn execute_bias(p: &BiasFieldParams, mut subject: Subject) -> Result<Executed> {
    map_scalars(&mut subject, |_, _, img| {
        let data = scalar(img)?;
        if p.coefficients.iter().all(|&c| c == 0.0) && monomials(p.order).len() == p.coefficients.len() {
            return Ok(data.clone());
        }
        let field = bias_field(img.spatial_shape()?, p.order, &p.coefficients)?;
        let mut out = data.clone();
        for mut ch in out.axis_iter_mut(Axis(0)) {
            ch.zip_mut_with(&field, |v, f| *v = (*v as f64 * f) as f32);
        }
        Ok(out)
    })?;
    Ok(Executed::not_invertible(subject))
}
