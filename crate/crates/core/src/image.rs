//! Images, subjects and datasets.

use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use ndarray::Array4;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::affine::AffineMatrix;
use crate::error::{Error, Result};
use crate::nifti;
use crate::transforms::{AppliedTransform, PipelineSpec};

/// Elementwise tolerance for affine equality in consistency checks.
pub const AFFINE_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Scalar,
    Label,
}

/// In-memory element types. `U8` is only used for footprint arithmetic of
/// byte-valued data; loaded voxels are always `F32` (scalar) or `U16` (label).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementType {
    U8,
    I16,
    U16,
    I32,
    F32,
    F64,
}

impl ElementType {
    pub fn size_bytes(self) -> u64 {
        match self {
            ElementType::U8 => 1,
            ElementType::I16 | ElementType::U16 => 2,
            ElementType::I32 | ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }
}

/// `C * X * Y * Z * bytes_per_element`, in exact integer arithmetic.
pub fn memory_footprint(shape: [usize; 4], element: ElementType) -> u64 {
    shape.iter().map(|&d| d as u64).product::<u64>() * element.size_bytes()
}

/// Channels-first voxel array `(C, X, Y, Z)`.
#[derive(Clone, Debug, PartialEq)]
pub enum VoxelData {
    Scalar(Array4<f32>),
    Label(Array4<u16>),
}

impl VoxelData {
    pub fn kind(&self) -> ImageKind {
        match self {
            VoxelData::Scalar(_) => ImageKind::Scalar,
            VoxelData::Label(_) => ImageKind::Label,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = match self {
            VoxelData::Scalar(a) => a.shape(),
            VoxelData::Label(a) => a.shape(),
        };
        [s[0], s[1], s[2], s[3]]
    }

    pub fn element_type(&self) -> ElementType {
        match self {
            VoxelData::Scalar(_) => ElementType::F32,
            VoxelData::Label(_) => ElementType::U16,
        }
    }

    /// Values as `f32`. Labels convert exactly (u16 fits the f32 mantissa).
    pub fn to_f32(&self) -> Array4<f32> {
        match self {
            VoxelData::Scalar(a) => a.clone(),
            VoxelData::Label(a) => a.mapv(|v| v as f32),
        }
    }

    /// Rebuilds data of `kind` from float values, checking label integrity.
    pub fn from_f32(kind: ImageKind, values: Array4<f32>) -> Result<Self> {
        match kind {
            ImageKind::Scalar => Ok(VoxelData::Scalar(values)),
            ImageKind::Label => {
                if let Some(bad) = values
                    .iter()
                    .find(|v| !(v.fract() == 0.0 && **v >= 0.0 && **v <= u16::MAX as f32))
                {
                    return Err(Error::KindMismatch(*bad as f64));
                }
                Ok(VoxelData::Label(values.mapv(|v| v as u16)))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Image {
    kind: ImageKind,
    data: Option<VoxelData>,
    affine: AffineMatrix,
    path: Option<PathBuf>,
    pub attributes: Map<String, Value>,
}

impl Image {
    pub fn scalar(data: Array4<f32>, affine: AffineMatrix) -> Self {
        Self::from_data(VoxelData::Scalar(data), affine)
    }

    pub fn label(data: Array4<u16>, affine: AffineMatrix) -> Self {
        Self::from_data(VoxelData::Label(data), affine)
    }

    pub fn from_data(data: VoxelData, affine: AffineMatrix) -> Self {
        let [c, x, y, z] = data.shape();
        assert!(c >= 1 && x >= 1 && y >= 1 && z >= 1, "image dimensions must be positive");
        Image {
            kind: data.kind(),
            data: Some(data),
            affine,
            path: None,
            attributes: Map::new(),
        }
    }

    /// A lazily-loaded image. Nothing is read until [`Image::load`].
    pub fn from_path(path: impl Into<PathBuf>, kind: ImageKind) -> Self {
        Image {
            kind,
            data: None,
            affine: AffineMatrix::identity(),
            path: Some(path.into()),
            attributes: Map::new(),
        }
    }

    pub(crate) fn with_path(mut self, path: &Path) -> Self {
        self.path = Some(path.to_path_buf());
        self
    }

    pub fn kind(&self) -> ImageKind {
        self.kind
    }

    pub fn is_loaded(&self) -> bool {
        self.data.is_some()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Reads voxel data from `path` if not already in memory. Idempotent.
    pub fn load(&mut self) -> Result<()> {
        if self.data.is_some() {
            return Ok(());
        }
        let path = self.path.clone().ok_or(Error::NoSource)?;
        let loaded = nifti::read_image(&path, self.kind)?;
        self.affine = loaded.affine;
        self.data = loaded.data;
        Ok(())
    }

    pub fn loaded(mut self) -> Result<Self> {
        self.load()?;
        Ok(self)
    }

    pub fn data(&self) -> Result<&VoxelData> {
        self.data.as_ref().ok_or(Error::NotLoaded)
    }

    /// Affine of the image. Meaningful only once loaded.
    pub fn affine(&self) -> &AffineMatrix {
        &self.affine
    }

    pub fn set_affine(&mut self, affine: AffineMatrix) {
        self.affine = affine;
    }

    /// Replaces voxel data, keeping kind, path and attributes.
    pub fn with_data(&self, data: VoxelData, affine: AffineMatrix) -> Result<Self> {
        if data.kind() != self.kind {
            return Err(Error::InvalidParameter("voxel data kind differs from image kind".into()));
        }
        Ok(Image {
            kind: self.kind,
            data: Some(data),
            affine,
            path: self.path.clone(),
            attributes: self.attributes.clone(),
        })
    }

    pub fn shape(&self) -> Result<[usize; 4]> {
        Ok(self.data()?.shape())
    }

    pub fn spatial_shape(&self) -> Result<[usize; 3]> {
        let [_, x, y, z] = self.shape()?;
        Ok([x, y, z])
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.affine.spacing()
    }

    /// Bytes needed to hold the voxels in memory. For an unloaded image only
    /// the file header is read.
    pub fn memory_footprint(&self) -> Result<u64> {
        if let Some(data) = &self.data {
            return Ok(memory_footprint(data.shape(), data.element_type()));
        }
        let path = self.path.as_ref().ok_or(Error::NoSource)?;
        let header = nifti::read_header(path)?;
        let element = match self.kind {
            ImageKind::Scalar => ElementType::F32,
            ImageKind::Label => ElementType::U16,
        };
        Ok(memory_footprint(header.shape4()?, element))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mismatch {
    Shape,
    Origin,
    Orientation,
    Spacing,
}

/// Which images disagree with the first image of a subject, and how.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub reference: String,
    pub mismatches: Vec<(String, Vec<Mismatch>)>,
}

impl ConsistencyReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn attributes_for(&self, name: &str) -> &[Mismatch] {
        self.mismatches
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.as_slice())
            .unwrap_or(&[])
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "consistent");
        }
        let parts: Vec<String> = self
            .mismatches
            .iter()
            .map(|(name, m)| format!("{name} differs from {} in {m:?}", self.reference))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

fn compare_geometry(a: &AffineMatrix, b: &AffineMatrix) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let (ta, tb) = (a.translation(), b.translation());
    if (0..3).any(|i| (ta[i] - tb[i]).abs() > AFFINE_TOLERANCE) {
        out.push(Mismatch::Origin);
    }
    let (sa, sb) = (a.spacing(), b.spacing());
    if (0..3).any(|i| (sa[i] - sb[i]).abs() > AFFINE_TOLERANCE) {
        out.push(Mismatch::Spacing);
    }
    let (la, lb) = (a.linear(), b.linear());
    let direction_differs = (0..3).any(|c| {
        let da = la.column(c) / sa[c];
        let db = lb.column(c) / sb[c];
        (0..3).any(|r| (da[r] - db[r]).abs() > AFFINE_TOLERANCE)
    });
    if direction_differs {
        out.push(Mismatch::Orientation);
    }
    // Spacing/orientation checks are on normalized quantities; catch any
    // residual elementwise difference of the linear block too.
    if out.is_empty() && !a.approx_eq(b, AFFINE_TOLERANCE) {
        out.push(Mismatch::Orientation);
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct Subject {
    pub images: IndexMap<String, Image>,
    pub metadata: Map<String, Value>,
    pub history: Vec<AppliedTransform>,
}

impl Subject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_image(mut self, name: impl Into<String>, image: Image) -> Self {
        self.images.insert(name.into(), image);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, image: Image) {
        self.images.insert(name.into(), image);
    }

    pub fn image(&self, name: &str) -> Result<&Image> {
        self.images.get(name).ok_or_else(|| Error::MissingImage(name.to_string()))
    }

    pub fn load_all(&mut self) -> Result<()> {
        for image in self.images.values_mut() {
            image.load()?;
        }
        Ok(())
    }

    /// Compares every image against the first one: spatial shape and affine
    /// (origin, orientation, spacing) within [`AFFINE_TOLERANCE`].
    pub fn check_consistency(&self) -> Result<ConsistencyReport> {
        let mut iter = self.images.iter();
        let Some((ref_name, reference)) = iter.next() else {
            return Ok(ConsistencyReport::default());
        };
        let ref_shape = reference.spatial_shape()?;
        let mut report = ConsistencyReport {
            reference: ref_name.clone(),
            mismatches: Vec::new(),
        };
        for (name, image) in iter {
            let mut diffs = Vec::new();
            if image.spatial_shape()? != ref_shape {
                diffs.push(Mismatch::Shape);
            }
            diffs.extend(compare_geometry(reference.affine(), image.affine()));
            if !diffs.is_empty() {
                report.mismatches.push((name.clone(), diffs));
            }
        }
        Ok(report)
    }

    pub fn ensure_consistent(&self) -> Result<()> {
        let report = self.check_consistency()?;
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InconsistentSubject(report))
        }
    }

    /// Spatial shape shared by the images (taken from the first image).
    pub fn spatial_shape(&self) -> Result<[usize; 3]> {
        self.images
            .values()
            .next()
            .ok_or_else(|| Error::InvalidParameter("subject has no images".into()))?
            .spatial_shape()
    }
}

#[derive(Clone, Debug)]
pub struct SubjectsDataset {
    subjects: Vec<Subject>,
    transform: Option<PipelineSpec>,
}

impl SubjectsDataset {
    pub fn new(subjects: Vec<Subject>, transform: Option<PipelineSpec>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(SubjectsDataset { subjects, transform })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn transform(&self) -> Option<&PipelineSpec> {
        self.transform.as_ref()
    }

    /// Loads and transforms subject `index` with the given RNG.
    pub fn prepare(&self, index: usize, rng: &mut crate::rng::Rng) -> Result<Subject> {
        let mut subject = self.subjects[index].clone();
        subject.load_all()?;
        match &self.transform {
            Some(t) => t.apply(subject, rng),
            None => Ok(subject),
        }
    }
}
