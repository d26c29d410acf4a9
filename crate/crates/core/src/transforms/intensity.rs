//! Transforms that change voxel values but not positions. They touch scalar
//! images only; label maps pass through untouched.

use std::collections::BTreeMap;

use ndarray::{Array3, Array4, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Executed, Transform};
use crate::error::{Error, Result};
use crate::image::{Image, ImageKind, Subject, VoxelData};
use crate::rng::Rng;
use crate::transforms::spatial::check_range;

/// Which voxels feed the statistics of a normalization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSpec {
    #[default]
    All,
    /// Voxels where the named label map is non-zero.
    Image(String),
    /// Voxels whose first-channel value exceeds the threshold.
    Threshold(f64),
}

/// Spatial mask for `image`, or `None` for every voxel.
pub fn resolve_mask(mask: &MaskSpec, subject: &Subject, image: &Image) -> Result<Option<Array3<bool>>> {
    let shape = image.spatial_shape()?;
    let resolved = match mask {
        MaskSpec::All => return Ok(None),
        MaskSpec::Image(name) => {
            let m = subject.image(name)?;
            let VoxelData::Label(labels) = m.data()? else {
                return Err(Error::InvalidParameter(format!("mask image '{name}' is not a label map")));
            };
            if m.spatial_shape()? != shape {
                return Err(Error::InvalidParameter(format!("mask image '{name}' has a different shape")));
            }
            labels.index_axis(Axis(0), 0).mapv(|v| v > 0)
        }
        MaskSpec::Threshold(t) => {
            let data = image.data()?.to_f32();
            data.index_axis(Axis(0), 0).mapv(|v| v as f64 > *t)
        }
    };
    if !resolved.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    Ok(Some(resolved))
}

/// Values of every channel at the masked voxels.
fn masked_values(data: &Array4<f32>, mask: Option<&Array3<bool>>) -> Vec<f64> {
    match mask {
        None => data.iter().map(|&v| v as f64).collect(),
        Some(m) => data
            .axis_iter(Axis(0))
            .flat_map(|ch| {
                ch.iter()
                    .zip(m.iter())
                    .filter(|(_, &b)| b)
                    .map(|(&v, _)| v as f64)
                    .collect::<Vec<_>>()
            })
            .collect(),
    }
}

fn sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values
}

/// Percentile of sorted data with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let t = pos - lo as f64;
    if t == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + t * (sorted[hi] - sorted[lo])
    }
}

fn scalar_data(image: &Image) -> Result<&Array4<f32>> {
    match image.data()? {
        VoxelData::Scalar(a) => Ok(a),
        VoxelData::Label(_) => Err(Error::InvalidParameter("expected a scalar image".into())),
    }
}

/// Applies `f` to every scalar image of the subject.
pub(crate) fn map_scalars(
    subject: &mut Subject,
    mut f: impl FnMut(&Subject, &str, &Image) -> Result<Array4<f32>>,
) -> Result<()> {
    let names: Vec<String> = subject
        .images
        .iter()
        .filter(|(_, img)| img.kind() == ImageKind::Scalar)
        .map(|(n, _)| n.clone())
        .collect();
    for name in names {
        let image = &subject.images[&name];
        let out = f(subject, &name, image)?;
        let updated = image.with_data(VoxelData::Scalar(out), *image.affine())?;
        subject.images.insert(name, updated);
    }
    Ok(())
}

// --- RescaleIntensity ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescaleParams {
    pub out_min_max: [f64; 2],
    pub percentiles: [f64; 2],
    /// Fixed input window; values outside are clipped. Overrides percentiles.
    pub in_min_max: Option<[f64; 2]>,
    pub mask: MaskSpec,
}

impl Default for RescaleParams {
    fn default() -> Self {
        RescaleParams {
            out_min_max: [0.0, 1.0],
            percentiles: [0.0, 100.0],
            in_min_max: None,
            mask: MaskSpec::All,
        }
    }
}

pub fn rescale_array(data: &Array4<f32>, lo: f64, hi: f64, out: [f64; 2]) -> Array4<f32> {
    let [a, b] = out;
    let (a32, b32) = (a as f32, b as f32);
    data.mapv(|v| {
        if hi <= lo {
            return a32;
        }
        let t = ((v as f64 - lo) / (hi - lo)).clamp(0.0, 1.0);
        if t >= 1.0 {
            b32
        } else {
            ((a + t * (b - a)) as f32).clamp(a32, b32)
        }
    })
}

pub(super) fn execute_rescale(p: &RescaleParams, mut subject: Subject) -> Result<Executed> {
    let [a, b] = p.out_min_max;
    if !(a < b) {
        return Err(Error::InvalidParameter(format!("output range {:?} is empty", p.out_min_max)));
    }
    let [pl, pu] = p.percentiles;
    if !(0.0 <= pl && pl < pu && pu <= 100.0) {
        return Err(Error::InvalidParameter(format!("percentiles {:?} out of order", p.percentiles)));
    }
    let mut windows = serde_json::Map::new();
    map_scalars(&mut subject, |s, name, img| {
        let data = scalar_data(img)?;
        let (lo, hi) = match p.in_min_max {
            Some([lo, hi]) => (lo, hi),
            None => {
                let mask = resolve_mask(&p.mask, s, img)?;
                let v = sorted(masked_values(data, mask.as_ref()));
                (percentile(&v, pl), percentile(&v, pu))
            }
        };
        windows.insert(name.to_string(), json!([lo, hi]));
        Ok(rescale_array(data, lo, hi, p.out_min_max))
    })?;
    let mut ex = Executed::not_invertible(subject);
    ex.details.insert("input_window".into(), windows.into());
    Ok(ex)
}

// --- ZNormalization ---

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZNormParams {
    pub mask: MaskSpec,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(super) fn execute_znorm(p: &ZNormParams, mut subject: Subject) -> Result<Executed> {
    let mut stats = serde_json::Map::new();
    map_scalars(&mut subject, |s, name, img| {
        let data = scalar_data(img)?;
        let mask = resolve_mask(&p.mask, s, img)?;
        let (mean, std) = mean_std(&masked_values(data, mask.as_ref()));
        if !(std > 0.0) {
            return Err(Error::ZeroVariance);
        }
        stats.insert(name.to_string(), json!({"mean": mean, "std": std}));
        Ok(data.mapv(|v| ((v as f64 - mean) / std) as f32))
    })?;
    let mut ex = Executed::not_invertible(subject);
    ex.details.insert("statistics".into(), stats.into());
    Ok(ex)
}

// --- HistogramStandardization ---

pub const DEFAULT_LANDMARK_PERCENTILES: [f64; 11] = [1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 99.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkTable {
    pub percentiles: Vec<f64>,
    pub standard_values: Vec<f64>,
}

impl Default for LandmarkTable {
    fn default() -> Self {
        LandmarkTable {
            percentiles: Vec::new(),
            standard_values: Vec::new(),
        }
    }
}

impl LandmarkTable {
    pub fn validate(&self) -> Result<()> {
        let (p, s) = (&self.percentiles, &self.standard_values);
        if p.len() < 3 || p.len() != s.len() {
            return Err(Error::InvalidParameter(
                "landmark table needs at least 3 percentiles with matching standard values".into(),
            ));
        }
        if p.iter().any(|&v| !(v > 0.0 && v < 100.0)) || p.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("landmark percentiles must increase strictly within (0, 100)".into()));
        }
        if s.iter().any(|v| !v.is_finite()) || s.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("standard values must be non-decreasing".into()));
        }
        Ok(())
    }
}

fn landmarks(values: Vec<f64>, percentiles: &[f64]) -> Result<Vec<f64>> {
    let v = sorted(values);
    let l: Vec<f64> = percentiles.iter().map(|&p| percentile(&v, p)).collect();
    if l[0] >= l[l.len() - 1] {
        return Err(Error::DegenerateHistogram);
    }
    Ok(l)
}

/// Learns a standard landmark scale from training images: each image's
/// landmarks are mapped so the first and last land on 0 and 100, then
/// averaged per percentile.
pub fn histogram_train(images: &[&Image], percentiles: &[f64], mask: &MaskSpec) -> Result<LandmarkTable> {
    if images.is_empty() {
        return Err(Error::InvalidParameter("histogram training needs at least one image".into()));
    }
    let mut sums = vec![0.0; percentiles.len()];
    for img in images {
        let data = img.data()?.to_f32();
        let m = match mask {
            MaskSpec::Image(_) => {
                return Err(Error::InvalidParameter(
                    "training masks must be thresholds; label masks need a subject".into(),
                ))
            }
            _ => resolve_mask(mask, &Subject::new(), img)?,
        };
        let l = landmarks(masked_values(&data, m.as_ref()), percentiles)?;
        let (first, last) = (l[0], l[l.len() - 1]);
        for (s, v) in sums.iter_mut().zip(&l) {
            *s += (v - first) / (last - first) * 100.0;
        }
    }
    let table = LandmarkTable {
        percentiles: percentiles.to_vec(),
        standard_values: sums.iter().map(|s| s / images.len() as f64).collect(),
    };
    table.validate()?;
    Ok(table)
}

/// Piecewise-linear map through `(x, y)` knots with linear extrapolation at
/// both ends. Knots with repeated `x` keep their first `y`.
#[derive(Clone, Debug)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let mut xs: Vec<f64> = Vec::with_capacity(x.len());
        let mut ys = Vec::with_capacity(x.len());
        for (&a, &b) in x.iter().zip(y) {
            if xs.last().is_some_and(|&l| a <= l) {
                continue;
            }
            xs.push(a);
            ys.push(b);
        }
        if xs.len() < 2 {
            return Err(Error::DegenerateHistogram);
        }
        Ok(PiecewiseLinear { xs, ys })
    }

    pub fn eval(&self, v: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&x| x <= v).clamp(1, n - 1) - 1;
        let (x0, x1, y0, y1) = (self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]);
        y0 + (v - x0) * (y1 - y0) / (x1 - x0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramParams {
    pub landmarks: LandmarkTable,
    pub mask: MaskSpec,
}

pub fn histogram_apply(data: &Array4<f32>, table: &LandmarkTable, mask: Option<&Array3<bool>>) -> Result<Array4<f32>> {
    table.validate()?;
    let l = landmarks(masked_values(data, mask), &table.percentiles)?;
    let map = PiecewiseLinear::new(&l, &table.standard_values)?;
    Ok(data.mapv(|v| map.eval(v as f64) as f32))
}

pub(super) fn execute_histogram(p: &HistogramParams, mut subject: Subject) -> Result<Executed> {
    map_scalars(&mut subject, |s, _, img| {
        let mask = resolve_mask(&p.mask, s, img)?;
        histogram_apply(scalar_data(img)?, &p.landmarks, mask.as_ref())
    })?;
    Ok(Executed::not_invertible(subject))
}

// --- Noise ---

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub mean: f64,
    pub std: f64,
    /// Seed of the per-voxel noise stream.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomNoiseParams {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Default for RandomNoiseParams {
    fn default() -> Self {
        RandomNoiseParams {
            mean: [0.0, 0.0],
            std: [0.0, 0.25],
        }
    }
}

pub(super) fn resolve_noise(p: &RandomNoiseParams, rng: &mut Rng) -> Result<Transform> {
    check_range("mean", p.mean)?;
    check_range("std", p.std)?;
    if p.std[0] < 0.0 {
        return Err(Error::InvalidParameter("noise std must be non-negative".into()));
    }
    let mean = rng.uniform_range(p.mean[0], p.mean[1]);
    let std = rng.uniform_range(p.std[0], p.std[1]);
    let seed = rng.next_seed();
    Ok(Transform::Noise(NoiseParams { mean, std, seed }))
}

pub(super) fn execute_noise(p: &NoiseParams, mut subject: Subject) -> Result<Executed> {
    if !(p.std >= 0.0) {
        return Err(Error::InvalidParameter("noise std must be non-negative".into()));
    }
    let mut rng = Rng::new(p.seed);
    map_scalars(&mut subject, |_, _, img| {
        let data = scalar_data(img)?;
        if p.std == 0.0 && p.mean == 0.0 {
            return Ok(data.clone());
        }
        Ok(data.mapv(|v| (v as f64 + rng.normal(p.mean, p.std)) as f32))
    })?;
    Ok(Executed::not_invertible(subject))
}

// --- Blur ---

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurParams {
    /// Gaussian standard deviation per axis, in mm.
    pub std: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomBlurParams {
    pub std: [f64; 2],
}

impl Default for RandomBlurParams {
    fn default() -> Self {
        RandomBlurParams { std: [0.0, 2.0] }
    }
}

/// Normalized Gaussian kernel truncated at four standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn convolve_axis(data: &Array4<f64>, axis: usize, kernel: &[f64]) -> Array4<f64> {
    if kernel.len() == 1 {
        return data.clone();
    }
    let r = (kernel.len() / 2) as isize;
    let n = data.shape()[axis] as isize;
    let mut out = data.clone();
    for (src, mut dst) in data.lanes(Axis(axis)).into_iter().zip(out.lanes_mut(Axis(axis))) {
        for i in 0..n {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let j = (i + t as isize - r).clamp(0, n - 1);
                acc += w * src[j as usize];
            }
            dst[i as usize] = acc;
        }
    }
    out
}

pub fn blur_array(data: &Array4<f32>, sigma_voxels: [f64; 3]) -> Array4<f32> {
    let mut work = data.mapv(|v| v as f64);
    for a in 0..3 {
        work = convolve_axis(&work, a + 1, &gaussian_kernel(sigma_voxels[a]));
    }
    work.mapv(|v| v as f32)
}

pub(super) fn resolve_blur(p: &RandomBlurParams, rng: &mut Rng) -> Result<Transform> {
    check_range("std", p.std)?;
    if p.std[0] < 0.0 {
        return Err(Error::InvalidParameter("blur std must be non-negative".into()));
    }
    let std = [0; 3].map(|_| rng.uniform_range(p.std[0], p.std[1]));
    Ok(Transform::Blur(BlurParams { std }))
}

pub(super) fn execute_blur(p: &BlurParams, mut subject: Subject) -> Result<Executed> {
    if p.std.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::InvalidParameter("blur std must be non-negative".into()));
    }
    map_scalars(&mut subject, |_, _, img| {
        let sp = img.spacing();
        let sigma = [0, 1, 2].map(|a| p.std[a] / sp[a]);
        Ok(blur_array(scalar_data(img)?, sigma))
    })?;
    Ok(Executed::not_invertible(subject))
}

// --- Gamma ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaParams {
    pub gamma: f64,
}

impl Default for GammaParams {
    fn default() -> Self {
        GammaParams { gamma: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomGammaParams {
    pub log_gamma: [f64; 2],
}

impl Default for RandomGammaParams {
    fn default() -> Self {
        RandomGammaParams { log_gamma: [-0.3, 0.3] }
    }
}

pub fn gamma_array(data: &Array4<f32>, gamma: f64) -> Array4<f32> {
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for &v in data {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return data.clone();
    }
    let (l, h) = (lo as f64, hi as f64);
    data.mapv(|v| {
        if v == lo || v == hi {
            return v;
        }
        let t = (v as f64 - l) / (h - l);
        ((t.powf(gamma) * (h - l) + l) as f32).clamp(lo, hi)
    })
}

pub(super) fn resolve_gamma(p: &RandomGammaParams, rng: &mut Rng) -> Result<Transform> {
    check_range("log_gamma", p.log_gamma)?;
    let g = rng.uniform_range(p.log_gamma[0], p.log_gamma[1]).exp();
    Ok(Transform::Gamma(GammaParams { gamma: g }))
}

pub(super) fn execute_gamma(p: &GammaParams, mut subject: Subject) -> Result<Executed> {
    if !(p.gamma > 0.0) {
        return Err(Error::InvalidParameter("gamma must be positive".into()));
    }
    map_scalars(&mut subject, |_, _, img| Ok(gamma_array(scalar_data(img)?, p.gamma)))?;
    Ok(Executed::not_invertible(subject))
}

// --- Swap ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwapParams {
    pub patch_size: [usize; 3],
    /// Origins of the two patches exchanged at each step, in order.
    pub swaps: Vec<[[usize; 3]; 2]>,
}

impl Default for SwapParams {
    fn default() -> Self {
        SwapParams {
            patch_size: [15, 15, 15],
            swaps: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSwapParams {
    pub patch_size: [usize; 3],
    pub num_iterations: usize,
}

impl Default for RandomSwapParams {
    fn default() -> Self {
        RandomSwapParams {
            patch_size: [15, 15, 15],
            num_iterations: 100,
        }
    }
}

fn patches_overlap(a: [usize; 3], b: [usize; 3], size: [usize; 3]) -> bool {
    (0..3).all(|i| a[i] < b[i] + size[i] && b[i] < a[i] + size[i])
}

pub fn draw_swaps(shape: [usize; 3], patch: [usize; 3], iterations: usize, rng: &mut Rng) -> Result<Vec<[[usize; 3]; 2]>> {
    if iterations == 0 {
        return Ok(Vec::new());
    }
    let fits = (0..3).all(|a| patch[a] >= 1 && patch[a] <= shape[a]);
    let separable = (0..3).any(|a| shape[a] >= 2 * patch[a]);
    if !fits || !separable {
        return Err(Error::NoValidPlacement(patch));
    }
    let draw = |rng: &mut Rng| [0, 1, 2].map(|a| rng.below((shape[a] - patch[a] + 1) as u64) as usize);
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        loop {
            let a = draw(rng);
            let b = draw(rng);
            if !patches_overlap(a, b, patch) {
                out.push([a, b]);
                break;
            }
        }
    }
    Ok(out)
}

pub fn swap_array(data: &Array4<f32>, patch: [usize; 3], swaps: &[[[usize; 3]; 2]]) -> Result<Array4<f32>> {
    let sh = data.shape();
    let mut out = data.clone();
    for [a, b] in swaps {
        if (0..3).any(|i| a[i] + patch[i] > sh[i + 1] || b[i] + patch[i] > sh[i + 1]) || patches_overlap(*a, *b, patch) {
            return Err(Error::NoValidPlacement(patch));
        }
        for c in 0..sh[0] {
            for i in 0..patch[0] {
                for j in 0..patch[1] {
                    for k in 0..patch[2] {
                        let pa = [c, a[0] + i, a[1] + j, a[2] + k];
                        let pb = [c, b[0] + i, b[1] + j, b[2] + k];
                        let tmp = out[pa];
                        out[pa] = out[pb];
                        out[pb] = tmp;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub(super) fn resolve_swap(p: &RandomSwapParams, subject: &Subject, rng: &mut Rng) -> Result<Transform> {
    let shape = subject
        .images
        .values()
        .find(|i| i.kind() == ImageKind::Scalar)
        .map(|i| i.spatial_shape())
        .transpose()?
        .unwrap_or([0; 3]);
    let swaps = if shape == [0; 3] {
        Vec::new()
    } else {
        draw_swaps(shape, p.patch_size, p.num_iterations, rng)?
    };
    Ok(Transform::Swap(SwapParams {
        patch_size: p.patch_size,
        swaps,
    }))
}

pub(super) fn execute_swap(p: &SwapParams, mut subject: Subject) -> Result<Executed> {
    map_scalars(&mut subject, |_, _, img| swap_array(scalar_data(img)?, p.patch_size, &p.swaps))?;
    Ok(Executed::not_invertible(subject))
}

// --- LabelsToImage ---

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsToImageParams {
    pub label_key: String,
    pub image_key: String,
    pub means: BTreeMap<u16, f64>,
    pub stds: BTreeMap<u16, f64>,
    pub seed: u64,
}

impl Default for LabelsToImageParams {
    fn default() -> Self {
        LabelsToImageParams {
            label_key: "label".into(),
            image_key: "image_from_labels".into(),
            means: BTreeMap::new(),
            stds: BTreeMap::new(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomLabelsToImageParams {
    pub label_key: String,
    pub image_key: String,
    pub mean_ranges: BTreeMap<u16, [f64; 2]>,
    pub std_ranges: BTreeMap<u16, [f64; 2]>,
}

impl Default for RandomLabelsToImageParams {
    fn default() -> Self {
        RandomLabelsToImageParams {
            label_key: "label".into(),
            image_key: "image_from_labels".into(),
            mean_ranges: BTreeMap::new(),
            std_ranges: BTreeMap::new(),
        }
    }
}

fn present_labels(subject: &Subject, key: &str) -> Result<(Vec<u16>, Array4<u16>)> {
    let VoxelData::Label(labels) = subject.image(key)?.data()? else {
        return Err(Error::InvalidParameter(format!("'{key}' is not a label map")));
    };
    let mut present: Vec<u16> = labels.iter().copied().collect();
    present.sort_unstable();
    present.dedup();
    Ok((present, labels.clone()))
}

pub(super) fn resolve_labels_to_image(p: &RandomLabelsToImageParams, subject: &Subject, rng: &mut Rng) -> Result<Transform> {
    let (present, _) = present_labels(subject, &p.label_key)?;
    let mut means = BTreeMap::new();
    let mut stds = BTreeMap::new();
    for l in present {
        let (Some(m), Some(s)) = (p.mean_ranges.get(&l), p.std_ranges.get(&l)) else {
            return Err(Error::MissingLabelRange(l));
        };
        check_range("mean", *m)?;
        check_range("std", *s)?;
        means.insert(l, rng.uniform_range(m[0], m[1]));
        stds.insert(l, rng.uniform_range(s[0], s[1]));
    }
    Ok(Transform::LabelsToImage(LabelsToImageParams {
        label_key: p.label_key.clone(),
        image_key: p.image_key.clone(),
        means,
        stds,
        seed: rng.next_seed(),
    }))
}

pub(super) fn execute_labels_to_image(p: &LabelsToImageParams, mut subject: Subject) -> Result<Executed> {
    let (present, labels) = present_labels(&subject, &p.label_key)?;
    for l in &present {
        if !p.means.contains_key(l) || !p.stds.contains_key(l) {
            return Err(Error::MissingLabelRange(*l));
        }
    }
    let mut rng = Rng::new(p.seed);
    let values = labels.mapv(|l| {
        let (m, s) = (p.means[&l], p.stds[&l]);
        if s == 0.0 {
            m as f32
        } else {
            rng.normal(m, s) as f32
        }
    });
    let affine = *subject.image(&p.label_key)?.affine();
    subject.insert(p.image_key.clone(), Image::scalar(values, affine));
    Ok(Executed::not_invertible(subject))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::AffineMatrix;

    fn vol(values: &[f32]) -> Array4<f32> {
        Array4::from_shape_vec((1, values.len(), 1, 1), values.to_vec()).unwrap()
    }

    #[test]
    fn rescale_three_values() {
        let out = rescale_array(&vol(&[2.0, 4.0, 6.0]), 2.0, 6.0, [0.0, 1.0]);
        assert_eq!(out.iter().copied().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        let flat = rescale_array(&vol(&[3.0, 3.0]), 3.0, 3.0, [-1.0, 1.0]);
        assert!(flat.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn znorm_three_values() {
        let s = Subject::new().with_image("t1", Image::scalar(vol(&[2.0, 4.0, 6.0]), AffineMatrix::identity()));
        let ex = execute_znorm(&ZNormParams::default(), s).unwrap();
        let VoxelData::Scalar(a) = ex.subject.images["t1"].data().unwrap() else { unreachable!() };
        let expected = 2.0 / (8.0f64 / 3.0).sqrt();
        assert!((a[[0, 0, 0, 0]] as f64 + expected).abs() < 1e-6);
        assert_eq!(a[[0, 1, 0, 0]], 0.0);
        let flat = Subject::new().with_image("t1", Image::scalar(vol(&[1.0, 1.0]), AffineMatrix::identity()));
        assert!(matches!(execute_znorm(&ZNormParams::default(), flat), Err(Error::ZeroVariance)));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert!((percentile(&v, 50.0) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_two_on_half() {
        let out = gamma_array(&vol(&[0.0, 0.5, 1.0]), 2.0);
        assert_eq!(out[[0, 1, 0, 0]], 0.25);
        assert_eq!(out[[0, 0, 0, 0]], 0.0);
        assert_eq!(out[[0, 2, 0, 0]], 1.0);
    }

    #[test]
    fn kernel_normalized() {
        let k = gaussian_kernel(1.3);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.len(), 2 * 6 + 1);
    }

    #[test]
    fn swap_needs_room() {
        let mut rng = Rng::new(0);
        assert!(matches!(draw_swaps([10, 10, 10], [6, 6, 6], 1, &mut rng), Err(Error::NoValidPlacement(_))));
        assert!(draw_swaps([12, 5, 5], [6, 5, 5], 3, &mut rng).is_ok());
    }

    #[test]
    fn piecewise_extrapolates() {
        let f = PiecewiseLinear::new(&[0.0, 1.0, 3.0], &[0.0, 10.0, 20.0]).unwrap();
        assert_eq!(f.eval(-1.0), -10.0);
        assert_eq!(f.eval(2.0), 15.0);
        assert_eq!(f.eval(5.0), 30.0);
    }
}
