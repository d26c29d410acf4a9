use std::path::PathBuf;

use crate::image::ConsistencyReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot read {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image has no voxel data and no source path")]
    NoSource,
    #[error("image is not loaded")]
    NotLoaded,
    #[error("label image contains a non-integer or out-of-range value ({0})")]
    KindMismatch(f64),

    #[error("affine 3x3 block is singular (|det| = {0:e})")]
    SingularAffine(f64),
    #[error("invalid affine: {0}")]
    InvalidAffine(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("bad NIfTI magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("two-file NIfTI (.hdr/.img) is not supported")]
    TwoFileNifti,
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("unsupported dimensionality dim[0] = {0} (at most 4 dimensions)")]
    UnsupportedDimensionality(i16),
    #[error("invalid NIfTI header: {0}")]
    InvalidHeader(String),
    #[error("invalid quaternion: b^2 + c^2 + d^2 = {0}")]
    InvalidQuaternion(f64),
    #[error("label value {0} does not fit the int16 on-disk range [0, 32767]")]
    LabelRange(u16),

    #[error("subject images are not spatially consistent: {0}")]
    InconsistentSubject(ConsistencyReport),
    #[error("unknown transform {0:?}")]
    UnknownTransform(String),
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
    #[error("transform changed the array shape from {expected:?} to {found:?}")]
    ShapeChanged {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("no image named {0:?} in subject")]
    MissingImage(String),
    #[error("pipeline contains a Lambda transform, which cannot be serialized")]
    NotSerializable,

    #[error("orientation is ambiguous: two voxel axes map to the same physical axis")]
    AmbiguousOrientation,
    #[error("target spacing must be positive, got {0:?}")]
    NonPositiveSpacing([f64; 3]),
    #[error("crop leaves no voxels along axis {0}")]
    EmptyResult(usize),
    #[error("drawn scale {0} is not positive")]
    DegenerateScale(f64),
    #[error("maximum displacement {requested} mm exceeds half the image extent ({limit} mm)")]
    ExcessiveDisplacement { requested: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask selects no voxels")]
    EmptyMask,
    #[error("masked intensities have zero variance")]
    ZeroVariance,
    #[error("degenerate histogram: landmark intensities coincide")]
    DegenerateHistogram,
    #[error("volume cannot hold two disjoint patches of size {0:?}")]
    NoValidPlacement([usize; 3]),
    #[error("no intensity range given for label {0}")]
    MissingLabelRange(u16),

    #[error("patch size {patch:?} does not fit in volume {volume:?}")]
    PatchTooLarge { patch: [usize; 3], volume: [usize; 3] },
    #[error("probability map is zero over every valid patch center")]
    AllZeroProbability,
    #[error("aggregation incomplete: {missing} grid locations not received")]
    IncompleteCoverage { missing: usize },
    #[error("crop-mode aggregation needs an even overlap, got {0:?}")]
    OddOverlap([usize; 3]),
    #[error("location {0:?} is not part of the aggregation grid")]
    UnknownLocation([usize; 3]),
    #[error("dataset has no subjects")]
    EmptyDataset,
    #[error("subject {index}: {source}")]
    Subject {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("slice {index} is out of bounds for axis {axis} of length {len}")]
    SliceOutOfBounds { axis: usize, index: usize, len: usize },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("PNG encoding failed: {0}")]
    Png(String),
}
