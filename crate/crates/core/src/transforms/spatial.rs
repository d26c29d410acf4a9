//! Transforms that move voxels: reorientation, resampling, crop/pad, flips,
//! affine and elastic warps, and anisotropy simulation. They apply to every
//! image in a subject; label maps are always interpolated with nearest
//! neighbour.

use nalgebra::{Matrix3, Matrix4, Vector3};
use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{elastic, Executed, Transform};
use crate::affine::{rotation_zyx, AffineMatrix};
use crate::error::{Error, Result};
use crate::image::{Image, Subject, VoxelData};
use crate::resample::{resample_affine, resample_with, Boundary, Interpolation};
use crate::rng::Rng;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoParams {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReorientParams {
    /// Output axis `a` reads input axis `permutation[a]`.
    pub permutation: [usize; 3],
    pub flips: [bool; 3],
}

impl Default for ReorientParams {
    fn default() -> Self {
        ReorientParams {
            permutation: [0, 1, 2],
            flips: [false; 3],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleParams {
    pub spacing: Option<[f64; 3]>,
    /// Name of an image in the subject whose grid is the target.
    pub reference: Option<String>,
    pub affine: Option<[f64; 16]>,
    pub shape: Option<[usize; 3]>,
    pub interpolation: Interpolation,
    pub pad_value: f32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropParams {
    pub low: [usize; 3],
    pub high: [usize; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    #[default]
    Constant,
    Edge,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PadParams {
    pub low: [usize; 3],
    pub high: [usize; 3],
    pub mode: PadMode,
    /// Constant for scalar images; label maps are padded with 0.
    pub value: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropOrPadParams {
    pub target_shape: [usize; 3],
}

impl Default for CropOrPadParams {
    fn default() -> Self {
        CropOrPadParams { target_shape: [1; 3] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipParams {
    pub axes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomFlipParams {
    pub axes: Vec<usize>,
    /// Probability of flipping each listed axis.
    pub p: f64,
}

impl Default for RandomFlipParams {
    fn default() -> Self {
        RandomFlipParams { axes: vec![0], p: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineParams {
    /// Row-major 4x4 physical-space matrix moving image content; output
    /// point `p` is read from the input at `matrix^-1 * p`.
    pub matrix: [f64; 16],
    pub interpolation: Interpolation,
    pub pad_value: f32,
}

impl Default for AffineParams {
    fn default() -> Self {
        AffineParams {
            matrix: AffineMatrix::identity().to_row_major(),
            interpolation: Interpolation::Linear,
            pad_value: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomAffineParams {
    pub scales: [f64; 2],
    pub degrees: [f64; 2],
    /// Millimetres.
    pub translation: [f64; 2],
    pub interpolation: Interpolation,
    pub pad_value: f32,
}

impl Default for RandomAffineParams {
    fn default() -> Self {
        RandomAffineParams {
            scales: [0.9, 1.1],
            degrees: [-10.0, 10.0],
            translation: [0.0, 0.0],
            interpolation: Interpolation::Linear,
            pad_value: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomElasticParams {
    pub num_control_points: [usize; 3],
    /// Millimetres.
    pub max_displacement: f64,
    pub locked_borders: usize,
    pub interpolation: Interpolation,
}

impl Default for RandomElasticParams {
    fn default() -> Self {
        RandomElasticParams {
            num_control_points: [7, 7, 7],
            max_displacement: 7.5,
            locked_borders: 2,
            interpolation: Interpolation::Linear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnisotropyParams {
    pub axis: usize,
    pub factor: f64,
}

impl Default for AnisotropyParams {
    fn default() -> Self {
        AnisotropyParams { axis: 0, factor: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomAnisotropyParams {
    pub axes: Vec<usize>,
    pub downsampling: [f64; 2],
}

impl Default for RandomAnisotropyParams {
    fn default() -> Self {
        RandomAnisotropyParams {
            axes: vec![0, 1, 2],
            downsampling: [1.5, 5.0],
        }
    }
}

pub(crate) fn check_axes(axes: &[usize]) -> Result<()> {
    if let Some(a) = axes.iter().find(|&&a| a > 2) {
        return Err(Error::InvalidParameter(format!("axis {a} is not a spatial axis (0, 1, 2)")));
    }
    Ok(())
}

pub(crate) fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] {
        return Err(Error::InvalidParameter(format!("{name} range {r:?} is not ordered")));
    }
    Ok(())
}

// --- exact index operations, generic over the voxel type ---

fn reorient_array<T: Copy>(a: &Array4<T>, perm: [usize; 3], flips: [bool; 3]) -> Array4<T> {
    let sh = a.shape();
    let n_in = [sh[1], sh[2], sh[3]];
    let n_out = [n_in[perm[0]], n_in[perm[1]], n_in[perm[2]]];
    Array4::from_shape_fn((sh[0], n_out[0], n_out[1], n_out[2]), |(c, i, j, k)| {
        let o = [i, j, k];
        let mut src = [0usize; 3];
        for a in 0..3 {
            src[perm[a]] = if flips[a] { n_out[a] - 1 - o[a] } else { o[a] };
        }
        a[[c, src[0], src[1], src[2]]]
    })
}

fn crop_array<T: Clone>(a: &Array4<T>, low: [usize; 3], high: [usize; 3]) -> Array4<T> {
    let sh = a.shape();
    a.slice(s![
        ..,
        low[0]..sh[1] - high[0],
        low[1]..sh[2] - high[1],
        low[2]..sh[3] - high[2]
    ])
    .to_owned()
}

fn pad_array<T: Copy>(a: &Array4<T>, low: [usize; 3], high: [usize; 3], mode: PadMode, value: T) -> Array4<T> {
    let sh = a.shape();
    let n = [sh[1], sh[2], sh[3]];
    let out_n = [n[0] + low[0] + high[0], n[1] + low[1] + high[1], n[2] + low[2] + high[2]];
    Array4::from_shape_fn((sh[0], out_n[0], out_n[1], out_n[2]), |(c, i, j, k)| {
        let o = [i, j, k];
        let mut src = [0usize; 3];
        for ax in 0..3 {
            let q = o[ax] as isize - low[ax] as isize;
            if q < 0 || q >= n[ax] as isize {
                match mode {
                    PadMode::Constant => return value,
                    PadMode::Edge => src[ax] = q.clamp(0, n[ax] as isize - 1) as usize,
                }
            } else {
                src[ax] = q as usize;
            }
        }
        a[[c, src[0], src[1], src[2]]]
    })
}

/// Affine of a reoriented grid: new index `o` reads old index `P * o`.
fn reoriented_affine(affine: &AffineMatrix, n_in: [usize; 3], perm: [usize; 3], flips: [bool; 3]) -> Result<AffineMatrix> {
    let mut p = Matrix4::<f64>::zeros();
    p[(3, 3)] = 1.0;
    for a in 0..3 {
        let row = perm[a];
        if flips[a] {
            p[(row, a)] = -1.0;
            p[(row, 3)] = (n_in[row] - 1) as f64;
        } else {
            p[(row, a)] = 1.0;
        }
    }
    AffineMatrix::new(affine.matrix() * p)
}

fn check_permutation(perm: [usize; 3]) -> Result<()> {
    let mut seen = [false; 3];
    for &p in &perm {
        if p > 2 || seen[p] {
            return Err(Error::InvalidParameter(format!("{perm:?} is not a permutation of axes")));
        }
        seen[p] = true;
    }
    Ok(())
}

pub(crate) fn reorient_image(image: &Image, perm: [usize; 3], flips: [bool; 3]) -> Result<Image> {
    check_permutation(perm)?;
    let n_in = image.spatial_shape()?;
    let data = match image.data()? {
        VoxelData::Scalar(a) => VoxelData::Scalar(reorient_array(a, perm, flips)),
        VoxelData::Label(a) => VoxelData::Label(reorient_array(a, perm, flips)),
    };
    let affine = reoriented_affine(image.affine(), n_in, perm, flips)?;
    image.with_data(data, affine)
}

pub(crate) fn crop_image(image: &Image, low: [usize; 3], high: [usize; 3]) -> Result<Image> {
    let n = image.spatial_shape()?;
    for a in 0..3 {
        if low[a] + high[a] >= n[a] {
            return Err(Error::EmptyResult(a));
        }
    }
    let data = match image.data()? {
        VoxelData::Scalar(a) => VoxelData::Scalar(crop_array(a, low, high)),
        VoxelData::Label(a) => VoxelData::Label(crop_array(a, low, high)),
    };
    let affine = image.affine().shifted(low.map(|v| v as f64));
    image.with_data(data, affine)
}

pub(crate) fn pad_image(image: &Image, low: [usize; 3], high: [usize; 3], mode: PadMode, value: f32) -> Result<Image> {
    let data = match image.data()? {
        VoxelData::Scalar(a) => VoxelData::Scalar(pad_array(a, low, high, mode, value)),
        VoxelData::Label(a) => VoxelData::Label(pad_array(a, low, high, mode, 0)),
    };
    let affine = image.affine().shifted(low.map(|v| -(v as f64)));
    image.with_data(data, affine)
}

/// Axis permutation and flips that bring `affine` closest to RAS+.
pub fn canonical_reorientation(affine: &AffineMatrix) -> Result<([usize; 3], [bool; 3])> {
    let l = affine.linear();
    let mut perm = [usize::MAX; 3];
    let mut flips = [false; 3];
    for c in 0..3 {
        let col = l.column(c);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| col[b].abs().total_cmp(&col[a].abs()));
        let (best, second) = (order[0], order[1]);
        if (col[best].abs() - col[second].abs()).abs() < 1e-9 {
            return Err(Error::AmbiguousOrientation);
        }
        if perm[best] != usize::MAX {
            return Err(Error::AmbiguousOrientation);
        }
        perm[best] = c;
        flips[best] = col[best] < 0.0;
    }
    Ok((perm, flips))
}

fn interpolate_image(
    image: &Image,
    interp: Interpolation,
    pad_value: f32,
    op: impl Fn(&Array4<f32>, Interpolation, Boundary) -> Result<Array4<f32>>,
    affine: AffineMatrix,
) -> Result<Image> {
    let data = match image.data()? {
        VoxelData::Scalar(a) => VoxelData::Scalar(op(a, interp, Boundary::Constant(pad_value))?),
        VoxelData::Label(a) => {
            let out = op(&a.mapv(|v| v as f32), Interpolation::Nearest, Boundary::Constant(0.0))?;
            VoxelData::Label(out.mapv(|v| v as u16))
        }
    };
    image.with_data(data, affine)
}

pub(crate) fn resample_image(
    image: &Image,
    shape: [usize; 3],
    affine: &AffineMatrix,
    world_map: Option<&AffineMatrix>,
    interp: Interpolation,
    pad_value: f32,
) -> Result<Image> {
    let src_affine = *image.affine();
    interpolate_image(
        image,
        interp,
        pad_value,
        |a, i, b| resample_affine(a, &src_affine, shape, affine, world_map, i, b),
        *affine,
    )
}

/// Grid covering the same field of view as `(shape, affine)` with a new spacing.
pub fn grid_for_spacing(shape: [usize; 3], affine: &AffineMatrix, spacing: [f64; 3]) -> Result<([usize; 3], AffineMatrix)> {
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::NonPositiveSpacing(spacing));
    }
    let old = affine.spacing();
    let mut new_shape = [0usize; 3];
    for a in 0..3 {
        let extent = shape[a] as f64 * old[a];
        new_shape[a] = ((extent / spacing[a]) - 1e-9).ceil().max(1.0) as usize;
    }
    let l = affine.linear();
    let mut new_l = Matrix3::zeros();
    for a in 0..3 {
        new_l.set_column(a, &(l.column(a) / old[a] * spacing[a]));
    }
    // Keep the corner of the field of view fixed.
    let half = Vector3::new(0.5, 0.5, 0.5);
    let t = affine.translation() - l * half + new_l * half;
    Ok((new_shape, AffineMatrix::from_parts(new_l, t)?))
}

/// Physical-space matrix for scale, then rotation (`Rz*Ry*Rx`, degrees),
/// then translation, about `center`.
pub fn compose_affine(scales: [f64; 3], degrees: [f64; 3], translation: [f64; 3], center: [f64; 3]) -> Result<AffineMatrix> {
    if let Some(&s) = scales.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::DegenerateScale(s));
    }
    let linear = rotation_zyx(degrees) * Matrix3::from_diagonal(&Vector3::from(scales));
    let c = Vector3::from(center);
    let t = c + Vector3::from(translation) - linear * c;
    AffineMatrix::from_parts(linear, t)
}

pub(crate) fn anisotropy_array(a: &Array4<f32>, axis: usize, factor: f64, interp: Interpolation) -> Array4<f32> {
    let sh = a.shape();
    let n = sh[axis + 1];
    let m = ((n as f64 / factor) - 1e-9).ceil().max(1.0) as usize;
    // Nearest-neighbour downsampling along `axis`, anchored at the first voxel.
    let down_src: Vec<usize> = (0..m)
        .map(|k| ((k as f64 * factor + 0.5).floor() as usize).min(n - 1))
        .collect();
    // Per output position: (low index, high index, weight of high) in the
    // downsampled grid.
    let up: Vec<(usize, usize, f64)> = (0..n)
        .map(|x| {
            let q = (x as f64 / factor).clamp(0.0, (m - 1) as f64);
            match interp {
                Interpolation::Nearest => {
                    let i = ((q + 0.5).floor() as usize).min(m - 1);
                    (i, i, 0.0)
                }
                Interpolation::Linear => {
                    let lo = q.floor() as usize;
                    let hi = (lo + 1).min(m - 1);
                    (lo, hi, q - lo as f64)
                }
            }
        })
        .collect();
    let mut out = a.clone();
    for (idx, v) in out.indexed_iter_mut() {
        let mut src = [idx.0, idx.1, idx.2, idx.3];
        let (lo, hi, w) = up[src[axis + 1]];
        src[axis + 1] = down_src[lo];
        let a_lo = a[src] as f64;
        *v = if w == 0.0 {
            a_lo as f32
        } else {
            src[axis + 1] = down_src[hi];
            let a_hi = a[src] as f64;
            ((1.0 - w) * a_lo + w * a_hi) as f32
        };
    }
    out
}

// --- executors for the deterministic spatial transforms ---

fn for_each_image(subject: &mut Subject, mut f: impl FnMut(&Image) -> Result<Image>) -> Result<()> {
    for image in subject.images.values_mut() {
        *image = f(image)?;
    }
    Ok(())
}

fn first_grid(subject: &Subject) -> Result<([usize; 3], AffineMatrix)> {
    let first = subject
        .images
        .values()
        .next()
        .ok_or_else(|| Error::InvalidParameter("subject has no images".into()))?;
    Ok((first.spatial_shape()?, *first.affine()))
}

pub(super) fn execute_reorient(p: &ReorientParams, mut subject: Subject) -> Result<Executed> {
    for_each_image(&mut subject, |img| reorient_image(img, p.permutation, p.flips))?;
    let mut inv = ReorientParams::default();
    for a in 0..3 {
        inv.permutation[p.permutation[a]] = a;
        inv.flips[p.permutation[a]] = p.flips[a];
    }
    Ok(Executed::invertible(subject, Transform::Reorient(inv)))
}

pub(super) fn execute_to_canonical(mut subject: Subject) -> Result<Executed> {
    let (_, affine) = first_grid(&subject)?;
    let (perm, flips) = canonical_reorientation(&affine)?;
    let params = ReorientParams {
        permutation: perm,
        flips,
    };
    let mut executed = execute_reorient(&params, std::mem::take(&mut subject))?;
    executed.details.insert("permutation".into(), json!(perm));
    executed.details.insert("flips".into(), json!(flips));
    Ok(executed)
}

pub(super) fn execute_flip(p: &FlipParams, mut subject: Subject) -> Result<Executed> {
    check_axes(&p.axes)?;
    let mut flips = [false; 3];
    for &a in &p.axes {
        flips[a] = !flips[a];
    }
    if flips.iter().any(|&f| f) {
        for_each_image(&mut subject, |img| reorient_image(img, [0, 1, 2], flips))?;
    }
    Ok(Executed::invertible(subject, Transform::Flip(p.clone())))
}

pub(super) fn execute_crop(p: &CropParams, mut subject: Subject) -> Result<Executed> {
    for_each_image(&mut subject, |img| crop_image(img, p.low, p.high))?;
    let inverse = Transform::Pad(PadParams {
        low: p.low,
        high: p.high,
        ..PadParams::default()
    });
    Ok(Executed::invertible(subject, inverse))
}

pub(super) fn execute_pad(p: &PadParams, mut subject: Subject) -> Result<Executed> {
    for_each_image(&mut subject, |img| pad_image(img, p.low, p.high, p.mode, p.value))?;
    let inverse = Transform::Crop(CropParams { low: p.low, high: p.high });
    Ok(Executed::invertible(subject, inverse))
}

/// Per-axis `(pad_low, pad_high, crop_low, crop_high)`; odd differences put
/// the extra voxel at the high end.
pub fn crop_or_pad_bounds(shape: [usize; 3], target: [usize; 3]) -> [[usize; 4]; 3] {
    let mut out = [[0usize; 4]; 3];
    for a in 0..3 {
        if target[a] >= shape[a] {
            let d = target[a] - shape[a];
            out[a][0] = d / 2;
            out[a][1] = d - d / 2;
        } else {
            let d = shape[a] - target[a];
            out[a][2] = d / 2;
            out[a][3] = d - d / 2;
        }
    }
    out
}

pub(super) fn execute_crop_or_pad(p: &CropOrPadParams, mut subject: Subject) -> Result<Executed> {
    if p.target_shape.iter().any(|&t| t == 0) {
        return Err(Error::InvalidParameter("target_shape must be positive".into()));
    }
    let (shape, _) = first_grid(&subject)?;
    let b = crop_or_pad_bounds(shape, p.target_shape);
    let pad_low = [b[0][0], b[1][0], b[2][0]];
    let pad_high = [b[0][1], b[1][1], b[2][1]];
    let crop_low = [b[0][2], b[1][2], b[2][2]];
    let crop_high = [b[0][3], b[1][3], b[2][3]];
    for_each_image(&mut subject, |img| {
        let mut out = img.clone();
        if pad_low.iter().chain(&pad_high).any(|&v| v > 0) {
            out = pad_image(&out, pad_low, pad_high, PadMode::Constant, 0.0)?;
        }
        if crop_low.iter().chain(&crop_high).any(|&v| v > 0) {
            out = crop_image(&out, crop_low, crop_high)?;
        }
        Ok(out)
    })?;
    let inverse = Transform::CropOrPad(CropOrPadParams { target_shape: shape });
    let mut ex = Executed::invertible(subject, inverse);
    ex.details.insert("original_shape".into(), json!(shape));
    ex.details.insert("pad_low".into(), json!(pad_low));
    ex.details.insert("pad_high".into(), json!(pad_high));
    ex.details.insert("crop_low".into(), json!(crop_low));
    ex.details.insert("crop_high".into(), json!(crop_high));
    Ok(ex)
}

pub(super) fn execute_resample(p: &ResampleParams, mut subject: Subject) -> Result<Executed> {
    let targets = [p.spacing.is_some(), p.reference.is_some(), p.affine.is_some()]
        .iter()
        .filter(|&&t| t)
        .count();
    if targets != 1 {
        return Err(Error::InvalidParameter(
            "Resample needs exactly one of spacing, reference, or affine+shape".into(),
        ));
    }
    let (orig_shape, orig_affine) = first_grid(&subject)?;
    let fixed_target = if let Some(name) = &p.reference {
        let r = subject.image(name)?;
        Some((r.spatial_shape()?, *r.affine()))
    } else if let Some(a) = &p.affine {
        let shape = p
            .shape
            .ok_or_else(|| Error::InvalidParameter("Resample with an affine needs a shape".into()))?;
        Some((shape, AffineMatrix::from_row_major(a)?))
    } else {
        None
    };
    for_each_image(&mut subject, |img| {
        let (shape, affine) = match (&fixed_target, p.spacing) {
            (Some(t), _) => *t,
            (None, Some(sp)) => grid_for_spacing(img.spatial_shape()?, img.affine(), sp)?,
            (None, None) => unreachable!("target validated above"),
        };
        resample_image(img, shape, &affine, None, p.interpolation, p.pad_value)
    })?;
    let inverse = Transform::Resample(ResampleParams {
        affine: Some(orig_affine.to_row_major()),
        shape: Some(orig_shape),
        interpolation: p.interpolation,
        pad_value: p.pad_value,
        ..ResampleParams::default()
    });
    let mut ex = Executed::invertible(subject, inverse);
    ex.details.insert("source_shape".into(), json!(orig_shape));
    ex.details.insert("source_affine".into(), json!(orig_affine.to_row_major()));
    Ok(ex)
}

pub(super) fn execute_affine(p: &AffineParams, mut subject: Subject) -> Result<Executed> {
    let forward = AffineMatrix::from_row_major(&p.matrix)?;
    let backward = forward.inverse()?;
    for_each_image(&mut subject, |img| {
        let shape = img.spatial_shape()?;
        let affine = *img.affine();
        resample_image(img, shape, &affine, Some(&backward), p.interpolation, p.pad_value)
    })?;
    let inverse = Transform::Affine(AffineParams {
        matrix: backward.to_row_major(),
        ..p.clone()
    });
    Ok(Executed::invertible(subject, inverse))
}

pub(super) fn execute_elastic(p: &elastic::ElasticParams, mut subject: Subject) -> Result<Executed> {
    p.validate()?;
    let mut cache: Option<([usize; 3], [f64; 3], std::sync::Arc<Vec<[f64; 3]>>)> = None;
    for_each_image(&mut subject, |img| {
        let shape = img.spatial_shape()?;
        let spacing = img.spacing();
        let field = match &cache {
            Some((s, sp, f)) if *s == shape && *sp == spacing => f.clone(),
            _ => {
                let f = std::sync::Arc::new(elastic::dense_index_displacement(p, shape, spacing));
                cache = Some((shape, spacing, f.clone()));
                f
            }
        };
        let [_, ny, nz] = shape;
        let map = |[i, j, k]: [usize; 3]| {
            let d = field[(i * ny + j) * nz + k];
            [i as f64 + d[0], j as f64 + d[1], k as f64 + d[2]]
        };
        let affine = *img.affine();
        interpolate_image(
            img,
            p.interpolation,
            p.pad_value,
            |a, interp, b| Ok(resample_with(a, shape, interp, b, map)),
            affine,
        )
    })?;
    Ok(Executed::not_invertible(subject))
}

pub(super) fn execute_anisotropy(p: &AnisotropyParams, mut subject: Subject) -> Result<Executed> {
    check_axes(&[p.axis])?;
    if !(p.factor >= 1.0) {
        return Err(Error::InvalidParameter(format!("anisotropy factor {} < 1", p.factor)));
    }
    for_each_image(&mut subject, |img| {
        let affine = *img.affine();
        interpolate_image(
            img,
            Interpolation::Linear,
            0.0,
            |a, interp, _| Ok(anisotropy_array(a, p.axis, p.factor, interp)),
            affine,
        )
    })?;
    Ok(Executed::not_invertible(subject))
}

// --- random parameter resolution ---

pub(super) fn resolve_flip(p: &RandomFlipParams, rng: &mut Rng) -> Result<Transform> {
    check_axes(&p.axes)?;
    let mut axes = Vec::new();
    for &a in &p.axes {
        if rng.uniform() < p.p {
            axes.push(a);
        }
    }
    Ok(Transform::Flip(FlipParams { axes }))
}

pub(super) fn resolve_affine(p: &RandomAffineParams, subject: &Subject, rng: &mut Rng) -> Result<Transform> {
    let scales = [0; 3].map(|_| rng.uniform_range(p.scales[0], p.scales[1]));
    let degrees = [0; 3].map(|_| rng.uniform_range(p.degrees[0], p.degrees[1]));
    let translation = [0; 3].map(|_| rng.uniform_range(p.translation[0], p.translation[1]));
    let (shape, affine) = first_grid(subject)?;
    let center = affine.index_to_physical(shape.map(|n| (n as f64 - 1.0) / 2.0));
    let m = compose_affine(scales, degrees, translation, center)?;
    Ok(Transform::Affine(AffineParams {
        matrix: m.to_row_major(),
        interpolation: p.interpolation,
        pad_value: p.pad_value,
    }))
}

pub(super) fn resolve_elastic(p: &RandomElasticParams, subject: &Subject, rng: &mut Rng) -> Result<Transform> {
    if p.num_control_points.iter().any(|&n| n < 4) {
        return Err(Error::InvalidParameter("num_control_points must be at least 4 per axis".into()));
    }
    if p.locked_borders > 2 {
        return Err(Error::InvalidParameter("locked_borders must be 0, 1 or 2".into()));
    }
    if !(p.max_displacement >= 0.0) {
        return Err(Error::InvalidParameter("max_displacement must be non-negative".into()));
    }
    let (shape, affine) = first_grid(subject)?;
    let spacing = affine.spacing();
    let limit = (0..3)
        .filter(|&a| shape[a] > 1)
        .map(|a| shape[a] as f64 * spacing[a] / 2.0)
        .fold(f64::INFINITY, f64::min);
    if p.max_displacement > limit {
        return Err(Error::ExcessiveDisplacement {
            requested: p.max_displacement,
            limit,
        });
    }
    let grid = elastic::random_control_grid(p.num_control_points, p.max_displacement, p.locked_borders, shape, rng);
    Ok(Transform::ElasticDeformation(elastic::ElasticParams {
        grid_shape: p.num_control_points,
        displacements: grid,
        interpolation: p.interpolation,
        pad_value: 0.0,
    }))
}

pub(super) fn resolve_anisotropy(p: &RandomAnisotropyParams, rng: &mut Rng) -> Result<Transform> {
    check_axes(&p.axes)?;
    if p.axes.is_empty() {
        return Err(Error::InvalidParameter("RandomAnisotropy needs at least one axis".into()));
    }
    if !(p.downsampling[0] >= 1.0) {
        return Err(Error::InvalidParameter("downsampling factors must be >= 1".into()));
    }
    let axis = p.axes[rng.below(p.axes.len() as u64) as usize];
    let factor = rng.uniform_range(p.downsampling[0], p.downsampling[1]);
    Ok(Transform::Anisotropy(AnisotropyParams { axis, factor }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(shape: [usize; 3], affine: AffineMatrix) -> Image {
        Image::scalar(
            Array4::from_shape_fn((1, shape[0], shape[1], shape[2]), |(_, i, j, k)| (i * 100 + j * 10 + k) as f32),
            affine,
        )
    }

    #[test]
    fn crop_shifts_origin_one_voxel() {
        let a = AffineMatrix::diagonal(2.0, 2.0, 2.0).unwrap();
        let im = img([5, 5, 5], a);
        let c = crop_image(&im, [1; 3], [1; 3]).unwrap();
        assert_eq!(c.spatial_shape().unwrap(), [3, 3, 3]);
        assert_eq!(c.affine().index_to_physical([0.0; 3]), [2.0, 2.0, 2.0]);
        assert!(matches!(crop_image(&im, [3, 0, 0], [2, 0, 0]), Err(Error::EmptyResult(0))));
    }

    #[test]
    fn pad_constant_border() {
        let im = Image::scalar(Array4::from_elem((1, 3, 3, 3), 1.0), AffineMatrix::identity());
        let p = pad_image(&im, [1; 3], [1; 3], PadMode::Constant, 0.0).unwrap();
        let VoxelData::Scalar(a) = p.data().unwrap() else { unreachable!() };
        assert_eq!(a[[0, 0, 2, 2]], 0.0);
        assert_eq!(a[[0, 4, 2, 2]], 0.0);
        assert_eq!(a[[0, 2, 2, 2]], 1.0);
        let e = pad_image(&im, [1; 3], [1; 3], PadMode::Edge, 0.0).unwrap();
        let VoxelData::Scalar(b) = e.data().unwrap() else { unreachable!() };
        assert!(b.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn crop_or_pad_arithmetic() {
        assert_eq!(crop_or_pad_bounds([181, 181, 181], [192, 192, 192])[0], [5, 6, 0, 0]);
        assert_eq!(crop_or_pad_bounds([10, 10, 10], [4, 4, 4])[1], [0, 0, 3, 3]);
        assert_eq!(crop_or_pad_bounds([7, 7, 7], [7, 7, 7])[2], [0, 0, 0, 0]);
    }

    #[test]
    fn grid_for_spacing_extent() {
        let (shape, affine) = grid_for_spacing([8, 8, 8], &AffineMatrix::identity(), [2.0; 3]).unwrap();
        assert_eq!(shape, [4, 4, 4]);
        assert_eq!(affine.spacing(), [2.0; 3]);
        // Field-of-view corner is unchanged.
        assert_eq!(affine.index_to_physical([-0.5; 3]), [-0.5; 3]);
        assert!(matches!(
            grid_for_spacing([8, 8, 8], &AffineMatrix::identity(), [0.0, 1.0, 1.0]),
            Err(Error::NonPositiveSpacing(_))
        ));
    }

    #[test]
    fn canonical_of_las() {
        let las = AffineMatrix::diagonal(-1.0, 1.0, 1.0).unwrap();
        assert_eq!(canonical_reorientation(&las).unwrap(), ([0, 1, 2], [true, false, false]));
        let swapped = AffineMatrix::from_rows([
            [0.0, 2.0, 0.0, 0.0],
            [0.0, 0.0, -3.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(canonical_reorientation(&swapped).unwrap(), ([1, 2, 0], [false, true, false]));
    }

    #[test]
    fn canonical_ambiguous_at_45_degrees() {
        let r = rotation_zyx([0.0, 0.0, 45.0]);
        let a = AffineMatrix::from_parts(r, Vector3::zeros()).unwrap();
        assert!(matches!(canonical_reorientation(&a), Err(Error::AmbiguousOrientation)));
    }

    #[test]
    fn reorient_preserves_physical_positions() {
        let a = AffineMatrix::from_rows([
            [0.0, 2.0, 0.0, 4.0],
            [0.0, 0.0, -3.0, 1.0],
            [-1.0, 0.0, 0.0, 2.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let im = img([4, 5, 3], a);
        let (perm, flips) = canonical_reorientation(&a).unwrap();
        let out = reorient_image(&im, perm, flips).unwrap();
        assert_eq!(out.affine().orientation_code(), "RAS");
        let VoxelData::Scalar(src) = im.data().unwrap() else { unreachable!() };
        let VoxelData::Scalar(dst) = out.data().unwrap() else { unreachable!() };
        for ((_, i, j, k), v) in dst.indexed_iter() {
            let p = out.affine().index_to_physical([i as f64, j as f64, k as f64]);
            let q = a.physical_to_index(p).unwrap();
            let q = q.map(|x| x.round() as usize);
            assert_eq!(*v, src[[0, q[0], q[1], q[2]]]);
        }
    }

    #[test]
    fn compose_affine_rejects_nonpositive_scale() {
        assert!(matches!(
            compose_affine([1.0, 0.0, 1.0], [0.0; 3], [0.0; 3], [0.0; 3]),
            Err(Error::DegenerateScale(_))
        ));
    }
}
