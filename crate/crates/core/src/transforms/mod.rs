//! The transform engine: pipelines, seeded application, history, replay
//! and inversion.
//!
//! A pipeline is a tree of [`PipelineSpec`] nodes. Leaves are [`Transform`]s;
//! random ones are resolved into deterministic leaves with concrete
//! parameters before they run, and those resolved leaves are what the
//! subject's history records. Replaying the history therefore reproduces a
//! run exactly.

pub mod artifacts;
pub mod elastic;
pub mod fft;
pub mod intensity;
pub mod spatial;

use std::fmt;
use std::sync::Arc;

use ndarray::Array4;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::image::{ImageKind, Subject, VoxelData};
use crate::rng::Rng;

use artifacts::*;
use elastic::ElasticParams;
use intensity::*;
use spatial::*;

/// Outcome of running one deterministic leaf.
pub(crate) struct Executed {
    pub subject: Subject,
    pub inverse: Option<Transform>,
    pub details: Map<String, Value>,
}

impl Executed {
    pub(crate) fn invertible(subject: Subject, inverse: Transform) -> Self {
        Executed {
            subject,
            inverse: Some(inverse),
            details: Map::new(),
        }
    }

    pub(crate) fn not_invertible(subject: Subject) -> Self {
        Executed {
            subject,
            inverse: None,
            details: Map::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    /// Moves voxels; applies to every image.
    Spatial,
    /// Changes values of scalar images only.
    Intensity,
}

macro_rules! transforms {
    ($( $variant:ident($params:ty) => $cat:ident ),* $(,)?) => {
        /// Every transform the engine knows, tagged by name with its
        /// parameters.
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(tag = "name", content = "params")]
        pub enum Transform {
            $( $variant($params), )*
        }

        impl Transform {
            pub const NAMES: &'static [&'static str] = &[$( stringify!($variant), )*];

            pub fn name(&self) -> &'static str {
                match self {
                    $( Transform::$variant(_) => stringify!($variant), )*
                }
            }

            pub fn category(&self) -> Category {
                match self {
                    $( Transform::$variant(_) => Category::$cat, )*
                }
            }

            /// Default parameters of the named transform.
            pub fn default_for(name: &str) -> Option<Transform> {
                match name {
                    $( stringify!($variant) => Some(Transform::$variant(<$params>::default())), )*
                    _ => None,
                }
            }
        }
    };
}

transforms! {
    Identity(NoParams) => Spatial,
    ToCanonical(NoParams) => Spatial,
    Reorient(ReorientParams) => Spatial,
    Resample(ResampleParams) => Spatial,
    Crop(CropParams) => Spatial,
    Pad(PadParams) => Spatial,
    CropOrPad(CropOrPadParams) => Spatial,
    Flip(FlipParams) => Spatial,
    RandomFlip(RandomFlipParams) => Spatial,
    Affine(AffineParams) => Spatial,
    RandomAffine(RandomAffineParams) => Spatial,
    ElasticDeformation(ElasticParams) => Spatial,
    RandomElasticDeformation(RandomElasticParams) => Spatial,
    Anisotropy(AnisotropyParams) => Spatial,
    RandomAnisotropy(RandomAnisotropyParams) => Spatial,
    RescaleIntensity(RescaleParams) => Intensity,
    ZNormalization(ZNormParams) => Intensity,
    HistogramStandardization(HistogramParams) => Intensity,
    Noise(NoiseParams) => Intensity,
    RandomNoise(RandomNoiseParams) => Intensity,
    Blur(BlurParams) => Intensity,
    RandomBlur(RandomBlurParams) => Intensity,
    Gamma(GammaParams) => Intensity,
    RandomGamma(RandomGammaParams) => Intensity,
    Swap(SwapParams) => Intensity,
    RandomSwap(RandomSwapParams) => Intensity,
    LabelsToImage(LabelsToImageParams) => Intensity,
    RandomLabelsToImage(RandomLabelsToImageParams) => Intensity,
    Spike(SpikeParams) => Intensity,
    RandomSpike(RandomSpikeParams) => Intensity,
    Ghosting(GhostingParams) => Intensity,
    RandomGhosting(RandomGhostingParams) => Intensity,
    Motion(MotionParams) => Intensity,
    RandomMotion(RandomMotionParams) => Intensity,
    BiasField(BiasFieldParams) => Intensity,
    RandomBiasField(RandomBiasFieldParams) => Intensity,
}

impl Transform {
    pub fn is_random(&self) -> bool {
        self.name().starts_with("Random")
    }

    /// Parameters as a JSON object.
    pub fn params(&self) -> Value {
        match serde_json::to_value(self) {
            Ok(Value::Object(mut m)) => m.remove("params").unwrap_or_else(|| json!({})),
            _ => json!({}),
        }
    }

    /// Builds a transform from its name and JSON parameters. Missing
    /// parameters take their defaults; unknown ones are an error.
    pub fn from_name_params(name: &str, params: Value) -> Result<Transform> {
        if !Self::NAMES.contains(&name) {
            return Err(Error::UnknownTransform(name.to_string()));
        }
        let params = if params.is_null() { json!({}) } else { params };
        serde_json::from_value(json!({"name": name, "params": params}))
            .map_err(|e| Error::InvalidPipeline(format!("{name}: {e}")))
    }

    /// Draws any random parameters, giving a deterministic transform.
    pub fn resolve(&self, subject: &Subject, rng: &mut Rng) -> Result<Transform> {
        match self {
            Transform::RandomFlip(p) => resolve_flip(p, rng),
            Transform::RandomAffine(p) => resolve_affine(p, subject, rng),
            Transform::RandomElasticDeformation(p) => resolve_elastic(p, subject, rng),
            Transform::RandomAnisotropy(p) => resolve_anisotropy(p, rng),
            Transform::RandomNoise(p) => resolve_noise(p, rng),
            Transform::RandomBlur(p) => resolve_blur(p, rng),
            Transform::RandomGamma(p) => resolve_gamma(p, rng),
            Transform::RandomSwap(p) => resolve_swap(p, subject, rng),
            Transform::RandomLabelsToImage(p) => resolve_labels_to_image(p, subject, rng),
            Transform::RandomSpike(p) => resolve_spike(p, subject, rng),
            Transform::RandomGhosting(p) => resolve_ghosting(p, rng),
            Transform::RandomMotion(p) => resolve_motion(p, rng),
            Transform::RandomBiasField(p) => resolve_bias(p, rng),
            other => Ok(other.clone()),
        }
    }

    pub(crate) fn execute(&self, subject: Subject) -> Result<Executed> {
        match self {
            Transform::Identity(_) => Ok(Executed::invertible(subject, self.clone())),
            Transform::ToCanonical(_) => execute_to_canonical(subject),
            Transform::Reorient(p) => execute_reorient(p, subject),
            Transform::Resample(p) => execute_resample(p, subject),
            Transform::Crop(p) => execute_crop(p, subject),
            Transform::Pad(p) => execute_pad(p, subject),
            Transform::CropOrPad(p) => execute_crop_or_pad(p, subject),
            Transform::Flip(p) => execute_flip(p, subject),
            Transform::Affine(p) => execute_affine(p, subject),
            Transform::ElasticDeformation(p) => execute_elastic(p, subject),
            Transform::Anisotropy(p) => execute_anisotropy(p, subject),
            Transform::RescaleIntensity(p) => execute_rescale(p, subject),
            Transform::ZNormalization(p) => execute_znorm(p, subject),
            Transform::HistogramStandardization(p) => execute_histogram(p, subject),
            Transform::Noise(p) => execute_noise(p, subject),
            Transform::Blur(p) => execute_blur(p, subject),
            Transform::Gamma(p) => execute_gamma(p, subject),
            Transform::Swap(p) => execute_swap(p, subject),
            Transform::LabelsToImage(p) => execute_labels_to_image(p, subject),
            Transform::Spike(p) => execute_spike(p, subject),
            Transform::Ghosting(p) => execute_ghosting(p, subject),
            Transform::Motion(p) => execute_motion(p, subject),
            Transform::BiasField(p) => execute_bias(p, subject),
            random => Err(Error::InvalidPipeline(format!("{} must be resolved before it runs", random.name()))),
        }
    }

    /// Loads the subject, checks preconditions, resolves random parameters
    /// and appends the resolved transform to the history.
    pub fn apply(&self, mut subject: Subject, rng: &mut Rng) -> Result<Subject> {
        subject.load_all()?;
        if self.category() == Category::Spatial && !matches!(self, Transform::Resample(_)) {
            subject.ensure_consistent()?;
        }
        let resolved = self.resolve(&subject, rng)?;
        let executed = resolved.execute(subject)?;
        let mut subject = executed.subject;
        subject.history.push(AppliedTransform {
            name: resolved.name().to_string(),
            invertible: executed.inverse.is_some(),
            inverse: executed.inverse,
            transform: Some(resolved),
            lambda: None,
            details: executed.details,
        });
        Ok(subject)
    }
}

type LambdaFn = dyn Fn(&Array4<f32>) -> Array4<f32> + Send + Sync;

/// A caller-supplied voxel function applied to images of the given kinds.
/// It lives only in memory: pipelines holding one cannot be serialized.
#[derive(Clone)]
pub struct Lambda {
    func: Arc<LambdaFn>,
    kinds: Vec<ImageKind>,
}

impl Lambda {
    pub fn new(kinds: &[ImageKind], func: impl Fn(&Array4<f32>) -> Array4<f32> + Send + Sync + 'static) -> Self {
        Lambda {
            func: Arc::new(func),
            kinds: kinds.to_vec(),
        }
    }

    pub fn kinds(&self) -> &[ImageKind] {
        &self.kinds
    }

    pub fn apply(&self, mut subject: Subject) -> Result<Subject> {
        subject.load_all()?;
        for image in subject.images.values_mut() {
            if !self.kinds.contains(&image.kind()) {
                continue;
            }
            let data = image.data()?;
            let input = data.to_f32();
            let output = (self.func)(&input);
            if output.shape() != input.shape() {
                return Err(Error::ShapeChanged {
                    expected: input.shape().to_vec(),
                    found: output.shape().to_vec(),
                });
            }
            let out = VoxelData::from_f32(image.kind(), output)?;
            *image = image.with_data(out, *image.affine())?;
        }
        subject.history.push(AppliedTransform {
            name: "Lambda".into(),
            transform: None,
            lambda: Some(self.clone()),
            invertible: false,
            inverse: None,
            details: Map::new(),
        });
        Ok(subject)
    }
}

impl fmt::Debug for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lambda").field("kinds", &self.kinds).finish_non_exhaustive()
    }
}

impl PartialEq for Lambda {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.func, &other.func) && self.kinds == other.kinds
    }
}

/// One entry of a subject's history.
#[derive(Clone, Debug, PartialEq)]
pub struct AppliedTransform {
    pub name: String,
    /// The deterministic transform that ran, with every random draw
    /// resolved. `None` for lambdas.
    pub transform: Option<Transform>,
    pub lambda: Option<Lambda>,
    pub invertible: bool,
    pub inverse: Option<Transform>,
    /// Statistics computed while running (normalization windows, crop
    /// amounts, source grids).
    pub details: Map<String, Value>,
}

impl AppliedTransform {
    /// JSON view: name, resolved parameters, invertibility and inverse.
    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "resolved_params": self.transform.as_ref().map(Transform::params).unwrap_or(Value::Null),
            "invertible": self.invertible,
            "inverse": self.inverse.as_ref().map(|t| json!({"name": t.name(), "params": t.params()})),
            "details": self.details,
        })
    }

    fn as_node(&self) -> PipelineSpec {
        match (&self.transform, &self.lambda) {
            (Some(t), _) => PipelineSpec::Leaf(t.clone()),
            (None, Some(l)) => PipelineSpec::Lambda(l.clone()),
            (None, None) => PipelineSpec::Leaf(Transform::Identity(NoParams {})),
        }
    }
}

impl Serialize for AppliedTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

/// A node of a transform pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum PipelineSpec {
    Compose(Vec<PipelineSpec>),
    /// With probability `p`, applies one child chosen by weight. Weights
    /// are normalized to sum to 1.
    OneOf { p: f64, children: Vec<(f64, PipelineSpec)> },
    Leaf(Transform),
    Lambda(Lambda),
}

impl From<Transform> for PipelineSpec {
    fn from(t: Transform) -> Self {
        PipelineSpec::Leaf(t)
    }
}

/// Index of the cumulative-weight interval containing `u`.
pub fn one_of_select(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

impl PipelineSpec {
    pub fn compose(children: impl IntoIterator<Item = PipelineSpec>) -> Self {
        PipelineSpec::Compose(children.into_iter().collect())
    }

    pub fn one_of(children: Vec<(f64, PipelineSpec)>, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidPipeline(format!("one_of probability {p} outside [0, 1]")));
        }
        if children.is_empty() {
            return Err(Error::InvalidPipeline("one_of needs at least one child".into()));
        }
        if children.iter().any(|(w, _)| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidPipeline("one_of weights must be positive".into()));
        }
        let total: f64 = children.iter().map(|(w, _)| w).sum();
        Ok(PipelineSpec::OneOf {
            p,
            children: children.into_iter().map(|(w, c)| (w / total, c)).collect(),
        })
    }

    pub fn lambda(kinds: &[ImageKind], func: impl Fn(&Array4<f32>) -> Array4<f32> + Send + Sync + 'static) -> Self {
        PipelineSpec::Lambda(Lambda::new(kinds, func))
    }

    /// Applies the pipeline. Every executed leaf appends to the history; a
    /// `OneOf` that does not fire records an `Identity` entry.
    pub fn apply(&self, mut subject: Subject, rng: &mut Rng) -> Result<Subject> {
        subject.load_all()?;
        match self {
            PipelineSpec::Compose(children) => {
                for child in children {
                    subject = child.apply(subject, rng)?;
                }
                Ok(subject)
            }
            PipelineSpec::OneOf { p, children } => {
                // Always two draws, so later transforms see the same stream
                // whatever happens here.
                let fire = rng.uniform();
                let which = rng.uniform();
                if fire < *p {
                    let weights: Vec<f64> = children.iter().map(|(w, _)| *w).collect();
                    children[one_of_select(&weights, which)].1.apply(subject, rng)
                } else {
                    let mut details = Map::new();
                    details.insert("skipped".into(), json!("one_of"));
                    let identity = Transform::Identity(NoParams {});
                    subject.history.push(AppliedTransform {
                        name: identity.name().into(),
                        transform: Some(identity.clone()),
                        lambda: None,
                        invertible: true,
                        inverse: Some(identity),
                        details,
                    });
                    Ok(subject)
                }
            }
            PipelineSpec::Leaf(t) => t.apply(subject, rng),
            PipelineSpec::Lambda(l) => l.apply(subject),
        }
    }

    /// Parses the canonical JSON form.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::InvalidPipeline(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let raw: RawNode = serde_json::from_value(value).map_err(|e| Error::InvalidPipeline(e.to_string()))?;
        raw.into_spec()
    }

    pub fn to_value(&self) -> Result<Value> {
        serde_json::to_value(RawNode::from_spec(self)?).map_err(Error::from)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_value()?).map_err(Error::from)
    }

    /// Leaves in execution order (branches of `OneOf` included).
    pub fn leaves(&self) -> Vec<&Transform> {
        match self {
            PipelineSpec::Compose(c) => c.iter().flat_map(|n| n.leaves()).collect(),
            PipelineSpec::OneOf { children, .. } => children.iter().flat_map(|(_, n)| n.leaves()).collect(),
            PipelineSpec::Leaf(t) => vec![t],
            PipelineSpec::Lambda(_) => Vec::new(),
        }
    }
}

impl Serialize for PipelineSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawNode::from_spec(self).map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PipelineSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        RawNode::deserialize(d)?.into_spec().map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawNode {
    Compose {
        children: Vec<RawNode>,
    },
    OneOf {
        #[serde(default = "one")]
        p: f64,
        children: Vec<RawChild>,
    },
    Leaf {
        name: String,
        #[serde(default)]
        params: Value,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChild {
    weight: f64,
    node: RawNode,
}

fn one() -> f64 {
    1.0
}

impl RawNode {
    fn into_spec(self) -> Result<PipelineSpec> {
        Ok(match self {
            RawNode::Compose { children } => {
                PipelineSpec::Compose(children.into_iter().map(RawNode::into_spec).collect::<Result<_>>()?)
            }
            RawNode::OneOf { p, children } => {
                let children = children
                    .into_iter()
                    .map(|c| Ok((c.weight, c.node.into_spec()?)))
                    .collect::<Result<Vec<_>>>()?;
                PipelineSpec::one_of(children, p)?
            }
            RawNode::Leaf { name, params } => PipelineSpec::Leaf(Transform::from_name_params(&name, params)?),
        })
    }

    fn from_spec(spec: &PipelineSpec) -> Result<RawNode> {
        Ok(match spec {
            PipelineSpec::Compose(c) => RawNode::Compose {
                children: c.iter().map(RawNode::from_spec).collect::<Result<_>>()?,
            },
            PipelineSpec::OneOf { p, children } => RawNode::OneOf {
                p: *p,
                children: children
                    .iter()
                    .map(|(w, n)| {
                        Ok(RawChild {
                            weight: *w,
                            node: RawNode::from_spec(n)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            PipelineSpec::Leaf(t) => RawNode::Leaf {
                name: t.name().to_string(),
                params: t.params(),
            },
            PipelineSpec::Lambda(_) => return Err(Error::NotSerializable),
        })
    }
}

/// The subject's history as a deterministic pipeline; applying it to the
/// original subject reproduces the transformed one.
pub fn history_as_pipeline(subject: &Subject) -> PipelineSpec {
    PipelineSpec::Compose(subject.history.iter().map(AppliedTransform::as_node).collect())
}

/// Inverse of the history: the inverses of the invertible entries in
/// reverse order, and the number of entries that had to be dropped.
pub fn invert_history(subject: &Subject) -> (PipelineSpec, usize) {
    let mut discarded = 0;
    let mut nodes = Vec::new();
    for entry in subject.history.iter().rev() {
        match (&entry.inverse, entry.invertible) {
            (Some(inv), true) => nodes.push(PipelineSpec::Leaf(inv.clone())),
            _ => discarded += 1,
        }
    }
    (PipelineSpec::Compose(nodes), discarded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::AffineMatrix;
    use crate::image::Image;

    fn subject() -> Subject {
        let t1 = Array4::from_shape_fn((1, 6, 5, 4), |(_, i, j, k)| (i * 31 + j * 7 + k) as f32);
        let seg = Array4::from_shape_fn((1, 6, 5, 4), |(_, i, _, _)| (i % 3) as u16);
        Subject::new()
            .with_image("t1", Image::scalar(t1, AffineMatrix::identity()))
            .with_image("seg", Image::label(seg, AffineMatrix::identity()))
    }

    #[test]
    fn select_partition() {
        assert_eq!(one_of_select(&[0.2, 0.8], 0.1), 0);
        assert_eq!(one_of_select(&[0.2, 0.8], 0.5), 1);
        assert_eq!(one_of_select(&[0.2, 0.8], 0.999_999), 1);
    }

    #[test]
    fn unknown_name_and_param() {
        let bad = r#"{"type":"leaf","name":"RandomWobble","params":{}}"#;
        assert!(matches!(PipelineSpec::from_json(bad), Err(Error::UnknownTransform(n)) if n == "RandomWobble"));
        let extra = r#"{"type":"leaf","name":"RandomFlip","params":{"axes":[0],"bogus":1}}"#;
        assert!(matches!(PipelineSpec::from_json(extra), Err(Error::InvalidPipeline(_))));
        let extra_node = r#"{"type":"compose","children":[],"x":1}"#;
        assert!(matches!(PipelineSpec::from_json(extra_node), Err(Error::InvalidPipeline(_))));
    }

    #[test]
    fn json_roundtrip_normalizes_weights() {
        let text = r#"{"type":"compose","children":[
            {"type":"one_of","p":0.5,"children":[
                {"weight":1,"node":{"type":"leaf","name":"RandomElasticDeformation"}},
                {"weight":4,"node":{"type":"leaf","name":"RandomAffine","params":{"degrees":[-5,5]}}}]},
            {"type":"leaf","name":"RescaleIntensity","params":{"out_min_max":[0,1]}}]}"#;
        let spec = PipelineSpec::from_json(text).unwrap();
        let PipelineSpec::Compose(c) = &spec else { panic!() };
        let PipelineSpec::OneOf { children, .. } = &c[0] else { panic!() };
        assert!((children[0].0 - 0.2).abs() < 1e-12);
        let again = PipelineSpec::from_value(spec.to_value().unwrap()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn empty_compose_is_noop() {
        let s = subject();
        let out = PipelineSpec::compose([]).apply(s.clone(), &mut Rng::new(1)).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.images["t1"].data().unwrap(), s.images["t1"].data().unwrap());
    }

    #[test]
    fn noise_leaves_labels_alone() {
        let s = subject();
        let t = Transform::RandomNoise(RandomNoiseParams {
            mean: [0.0, 0.0],
            std: [1.0, 1.0],
        });
        let out = t.apply(s.clone(), &mut Rng::new(3)).unwrap();
        assert_eq!(out.images["seg"].data().unwrap(), s.images["seg"].data().unwrap());
        assert_ne!(out.images["t1"].data().unwrap(), s.images["t1"].data().unwrap());
        assert_eq!(out.history[0].name, "Noise");
    }

    #[test]
    fn invert_flip_and_noise() {
        let s = subject();
        let spec = PipelineSpec::compose([
            Transform::Flip(FlipParams { axes: vec![0] }).into(),
            Transform::RandomNoise(RandomNoiseParams::default()).into(),
        ]);
        let out = spec.apply(s, &mut Rng::new(0)).unwrap();
        let (inv, dropped) = invert_history(&out);
        assert_eq!(dropped, 1);
        assert_eq!(inv, PipelineSpec::compose([Transform::Flip(FlipParams { axes: vec![0] }).into()]));
    }

    #[test]
    fn pad_inverts_to_crop() {
        let out = Transform::Pad(PadParams {
            low: [2; 3],
            high: [2; 3],
            ..PadParams::default()
        })
        .apply(subject(), &mut Rng::new(0))
        .unwrap();
        let (inv, _) = invert_history(&out);
        assert_eq!(
            inv,
            PipelineSpec::compose([Transform::Crop(CropParams { low: [2; 3], high: [2; 3] }).into()])
        );
    }

    #[test]
    fn lambda_shape_check_and_history() {
        let s = subject();
        let scale = PipelineSpec::lambda(&[ImageKind::Scalar], |a| a / 1000.0);
        let out = scale.apply(s.clone(), &mut Rng::new(0)).unwrap();
        assert_eq!(out.history[0].name, "Lambda");
        assert!(!out.history[0].invertible);
        assert_eq!(out.images["seg"].data().unwrap(), s.images["seg"].data().unwrap());
        assert!(matches!(scale.to_value(), Err(Error::NotSerializable)));
        let shrink = PipelineSpec::lambda(&[ImageKind::Scalar], |a| a.slice(ndarray::s![.., 1.., .., ..]).to_owned());
        assert!(matches!(shrink.apply(s, &mut Rng::new(0)), Err(Error::ShapeChanged { .. })));
    }

    #[test]
    fn inconsistent_subject_rejected_for_spatial() {
        let s = subject().with_image(
            "other",
            Image::scalar(Array4::zeros((1, 6, 5, 4)), AffineMatrix::diagonal(2.0, 1.0, 1.0).unwrap()),
        );
        let t = Transform::Flip(FlipParams { axes: vec![1] });
        assert!(matches!(t.apply(s.clone(), &mut Rng::new(0)), Err(Error::InconsistentSubject(_))));
        // Intensity transforms do not need aligned grids.
        assert!(Transform::Gamma(GammaParams { gamma: 2.0 }).apply(s, &mut Rng::new(0)).is_ok());
    }
}
