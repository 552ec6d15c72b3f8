//! Domain model for unlabeled pools, detections, and selection configuration.
//!
//! A [`Pool`] is an ordered list of [`Sample`]s with unique ids; the order is
//! stable and defines tie-breaking everywhere in the engine (lowest position
//! wins). Pools are immutable after construction and safe to share across
//! worker threads.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid_input("feature vector must be non-empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input(
                "feature vector contains a non-finite element",
            ));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Vec<f64> {
        v.values
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Axis-aligned detection box in pixel coordinates (left, top, width, height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid_input("bounding box has non-finite entries"));
        }
        if x < 0.0 || y < 0.0 {
            return Err(Error::invalid_input(format!(
                "bounding box origin must be non-negative, got ({x}, {y})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::invalid_input(format!(
                "bounding box extent must be positive, got {w}x{h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Checks the box fits inside an image of `image_width` x `image_height` pixels.
    pub fn validate_against(&self, image_width: u32, image_height: u32) -> Result<()> {
        if self.x + self.w > image_width as f64 || self.y + self.h > image_height as f64 {
            return Err(Error::invalid_input(format!(
                "bounding box ({}, {}, {}, {}) exceeds image bounds {}x{}",
                self.x, self.y, self.w, self.h, image_width, image_height
            )));
        }
        Ok(())
    }
}

/// One detected object: its box and the pooled feature cropped from a
/// feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub bbox: BoundingBox,
    pub feature: FeatureVector,
    /// Detector confidence in `[0, 1]`; treated as 1 when absent.
    pub detection_score: Option<f64>,
    pub class_label: Option<String>,
}

/// One unlabeled pool element.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Information score. Non-negative at ingestion; internal working copies
    /// held by the selector may go negative during selection.
    pub uncertainty: f64,
    pub image_feature: FeatureVector,
    pub objects: Vec<ObjectInstance>,
    pub class_probs: Option<Vec<f64>>,
}

impl Sample {
    /// Convenience constructor for plain-mode samples (single embedding, no
    /// detections).
    pub fn plain(id: impl Into<String>, uncertainty: f64, embedding: Vec<f64>) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            uncertainty,
            image_feature: FeatureVector::new(embedding)?,
            objects: Vec::new(),
            class_probs: None,
        })
    }
}

/// One invariant violation found while validating pool data.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Id of the offending sample, when the violation is sample-scoped.
    pub sample_id: Option<String>,
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    fn new(sample_id: Option<&str>, field: &'static str, message: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.map(str::to_owned),
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sample_id {
            Some(id) => write!(f, "sample {:?} {}: {}", id, self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Reports every invariant violation in `samples`; an empty report means the
/// data can back a [`Pool`]. Violations are data, not failures.
pub fn validate_samples(samples: &[Sample]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();

    let mut object_dim: Option<usize> = None;
    let mut image_dim: Option<usize> = None;

    for (pos, sample) in samples.iter().enumerate() {
        let id = sample.id.as_str();
        if let Some(first) = seen.insert(id, pos) {
            violations.push(Violation::new(
                Some(id),
                "id",
                format!("duplicate id (positions {first} and {pos})"),
            ));
        }

        if !sample.uncertainty.is_finite() {
            violations.push(Violation::new(Some(id), "uncertainty", "must be finite"));
        } else if sample.uncertainty < 0.0 {
            violations.push(Violation::new(
                Some(id),
                "uncertainty",
                format!(
                    "must be non-negative at ingestion, got {}",
                    sample.uncertainty
                ),
            ));
        }

        match image_dim {
            None => image_dim = Some(sample.image_feature.dim()),
            Some(dim) if dim != sample.image_feature.dim() => {
                violations.push(Violation::new(
                    Some(id),
                    "image_feature",
                    format!(
                        "dimension {} differs from pool image-feature dimension {}",
                        sample.image_feature.dim(),
                        dim
                    ),
                ));
            }
            _ => {}
        }

        for (obj_idx, obj) in sample.objects.iter().enumerate() {
            match object_dim {
                None => object_dim = Some(obj.feature.dim()),
                Some(dim) if dim != obj.feature.dim() => {
                    violations.push(Violation::new(
                        Some(id),
                        "objects",
                        format!(
                            "object {} feature dimension {} differs from pool object dimension {}",
                            obj_idx,
                            obj.feature.dim(),
                            dim
                        ),
                    ));
                }
                _ => {}
            }
            if let Some(score) = obj.detection_score {
                if !(0.0..=1.0).contains(&score) {
                    violations.push(Violation::new(
                        Some(id),
                        "objects",
                        format!("object {obj_idx} detection score {score} outside [0, 1]"),
                    ));
                }
            }
        }

        if let Some(probs) = &sample.class_probs {
            if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                violations.push(Violation::new(
                    Some(id),
                    "class_probs",
                    "entries must be finite and non-negative",
                ));
            } else {
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    violations.push(Violation::new(
                        Some(id),
                        "class_probs",
                        format!("sums to {sum}, expected 1 within 1e-6"),
                    ));
                }
            }
        }
    }

    violations
}

/// Ordered, immutable collection of samples with an id lookup index.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    samples: Vec<Sample>,
    id_index: HashMap<String, usize>,
}

impl Pool {
    /// Validates `samples` and builds the pool; any violation rejects the
    /// whole input.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let violations = validate_samples(&samples);
        if !violations.is_empty() {
            return Err(Error::InvalidPool(violations));
        }
        let id_index = samples
            .iter()
            .enumerate()
            .map(|(pos, s)| (s.id.clone(), pos))
            .collect();
        Ok(Self { samples, id_index })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, position: usize) -> &Sample {
        &self.samples[position]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    /// Position for `id`, or an invalid-input error naming the id.
    pub fn require_position(&self, id: &str) -> Result<usize> {
        self.position(id)
            .ok_or_else(|| Error::invalid_input(format!("unknown sample id {id:?}")))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn uncertainties(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.uncertainty).collect()
    }
}

/// Re-checks every invariant on an already-built pool.
pub fn validate_pool(pool: &Pool) -> Vec<Violation> {
    let mut violations = validate_samples(&pool.samples);
    for (pos, sample) in pool.samples.iter().enumerate() {
        if pool.id_index.get(&sample.id) != Some(&pos) {
            violations.push(Violation::new(
                Some(&sample.id),
                "id_index",
                format!("index entry does not point back to position {pos}"),
            ));
        }
    }
    violations
}

/// Distance metric between feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    /// `sum_k (f_k - g_k)^2` in object mode; plain euclidean norm in plain mode.
    SqEuclidean,
    /// `1 - cos(f, g)`, clamped to `[0, 2]`; defined as 1 when either norm is 0.
    Cosine,
}

/// How per-object-pair distances collapse into one image-pair distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Max,
    Avg,
}

/// Whether samples carry detected objects or a single plain embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    Object,
    Plain,
}

/// How the pool diameter is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DmaxEstimation {
    /// Maximum over all unordered pairs.
    #[default]
    Exact,
    /// Maximum over `pair_count` pairs drawn uniformly with `seed`; a lower
    /// bound on the exact value.
    Sampled { pair_count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub metric: DistanceMetric,
    pub aggregation: Aggregation,
    pub use_image_features: bool,
    pub mode: DistanceMode,
    #[serde(default, rename = "dmax")]
    pub dmax_estimation: DmaxEstimation,
}

impl DistanceConfig {
    /// Object mode with squared euclidean distance, max aggregation, and
    /// image features on: the configuration reported best in ablation.
    pub fn object_default() -> Self {
        Self {
            metric: DistanceMetric::SqEuclidean,
            aggregation: Aggregation::Max,
            use_image_features: true,
            mode: DistanceMode::Object,
            dmax_estimation: DmaxEstimation::Exact,
        }
    }

    /// Plain mode over the whole-image embedding with the euclidean norm.
    pub fn plain_default() -> Self {
        Self {
            metric: DistanceMetric::SqEuclidean,
            aggregation: Aggregation::Max,
            use_image_features: false,
            mode: DistanceMode::Plain,
            dmax_estimation: DmaxEstimation::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DmaxEstimation::Sampled { pair_count, .. } = self.dmax_estimation {
            if pair_count == 0 {
                return Err(Error::invalid_input("sampled d_max needs pair_count >= 1"));
            }
        }
        Ok(())
    }
}

/// Similarity kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    Gaussian,
    Linear,
}

/// Kernel family plus the bandwidth fraction `alpha`; the bandwidth itself is
/// resolved per cycle from `alpha` and the pool's d_max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub kind: SimilarityKind,
    pub alpha: f64,
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid_input(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    NorisSum,
    NorisMax,
    Uncertainty,
    Random,
    KCenter,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::NorisSum,
        Strategy::NorisMax,
        Strategy::Uncertainty,
        Strategy::Random,
        Strategy::KCenter,
        Strategy::Hybrid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::NorisSum => "noris-sum",
            Strategy::NorisMax => "noris-max",
            Strategy::Uncertainty => "uncertainty",
            Strategy::Random => "random",
            Strategy::KCenter => "k-center",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Full specification of one selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub budget: usize,
    pub similarity: SimilarityConfig,
    pub distance: DistanceConfig,
    #[serde(default)]
    pub clamp_scores: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SelectionConfig {
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.budget == 0 || self.budget > pool_size {
            return Err(Error::invalid_input(format!(
                "budget must lie in [1, {pool_size}], got {}",
                self.budget
            )));
        }
        self.similarity.validate()?;
        self.distance.validate()
    }
}

/// One selected sample with its selection step (1-based) and the working
/// score it was picked at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSample {
    pub id: String,
    pub step: usize,
    pub marginal_score: f64,
}

/// Bookkeeping counters for complexity assertions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelectionStats {
    /// Number of similarity-provider evaluations performed during selection.
    pub sim_evals: u64,
    /// Number of argmax scans over the unselected set.
    pub argmax_scans: u64,
}

/// Ordered selection with its score trace and the batch objectives evaluated
/// on the final set. Fields that need a kernel-backed provider are `None`
/// when the producing operation had none (injected matrices, distance-only
/// baselines run stand-alone).
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected: Vec<SelectedSample>,
    pub d_max_used: Option<f64>,
    pub lambda_used: Option<f64>,
    pub objective_sum: Option<f64>,
    pub objective_max: Option<f64>,
    pub stats: SelectionStats,
}

impl SelectionResult {
    pub fn selected_ids(&self) -> Vec<&str> {
        self.selected.iter().map(|s| s.id.as_str()).collect()
    }

    /// Positions of the selected samples in pool order of selection.
    pub fn selected_positions(&self, pool: &Pool) -> Vec<usize> {
        self.selected
            .iter()
            .map(|s| pool.position(&s.id).expect("selected id exists in pool"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, uncertainty: f64) -> Sample {
        Sample::plain(id, uncertainty, vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn feature_vector_rejects_nan_and_empty() {
        assert!(FeatureVector::new(vec![]).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
        assert_eq!(FeatureVector::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn bounding_box_invariants() {
        assert!(BoundingBox::new(0.0, 0.0, 10.0, 5.0).is_ok());
        assert!(BoundingBox::new(-1.0, 0.0, 10.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        let b = BoundingBox::new(90.0, 0.0, 20.0, 5.0).unwrap();
        assert!(b.validate_against(100, 100).is_err());
        assert!(b.validate_against(110, 100).is_ok());
    }

    #[test]
    fn duplicate_ids_reported() {
        let samples = vec![sample("a", 0.5), sample("b", 0.2), sample("a", 0.1)];
        let report = validate_samples(&samples);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].sample_id.as_deref(), Some("a"));
        assert_eq!(report[0].field, "id");
    }

    #[test]
    fn nan_uncertainty_reported() {
        let samples = vec![sample("a", f64::NAN)];
        let report = validate_samples(&samples);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].field, "uncertainty");
    }

    #[test]
    fn negative_uncertainty_rejected_at_ingestion() {
        let samples = vec![sample("a", -0.1)];
        assert_eq!(validate_samples(&samples).len(), 1);
    }

    #[test]
    fn well_formed_pool_passes() {
        let samples = vec![sample("a", 0.5), sample("b", 0.2), sample("c", 0.0)];
        assert!(validate_samples(&samples).is_empty());
        let pool = Pool::new(samples).unwrap();
        assert!(validate_pool(&pool).is_empty());
    }

    #[test]
    fn id_index_consistency() {
        let pool = Pool::new(vec![sample("x", 0.1), sample("y", 0.2), sample("z", 0.3)]).unwrap();
        for (pos, s) in pool.iter().enumerate() {
            assert_eq!(pool.position(&s.id), Some(pos));
        }
        assert_eq!(pool.position("missing"), None);
        assert!(pool.require_position("missing").is_err());
    }

    #[test]
    fn mixed_object_dims_reported() {
        let mut a = sample("a", 0.5);
        a.objects.push(ObjectInstance {
            bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            feature: FeatureVector::new(vec![1.0, 2.0]).unwrap(),
            detection_score: None,
            class_label: None,
        });
        let mut b = sample("b", 0.5);
        b.objects.push(ObjectInstance {
            bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            feature: FeatureVector::new(vec![1.0, 2.0, 3.0]).unwrap(),
            detection_score: None,
            class_label: None,
        });
        let report = validate_samples(&[a, b]);
        assert!(report.iter().any(|v| v.field == "objects"));
    }

    #[test]
    fn class_probs_must_sum_to_one() {
        let mut s = sample("a", 0.5);
        s.class_probs = Some(vec![0.5, 0.4]);
        assert_eq!(validate_samples(&[s]).len(), 1);
    }

    #[test]
    fn budget_bounds_checked() {
        let cfg = SelectionConfig {
            strategy: Strategy::Uncertainty,
            budget: 0,
            similarity: SimilarityConfig {
                kind: SimilarityKind::Gaussian,
                alpha: 0.5,
            },
            distance: DistanceConfig::plain_default(),
            clamp_scores: false,
            seed: 0,
        };
        assert!(cfg.validate(4).is_err());
        let cfg = SelectionConfig { budget: 5, ..cfg };
        assert!(cfg.validate(4).is_err());
        let cfg = SelectionConfig { budget: 4, ..cfg };
        assert!(cfg.validate(4).is_ok());
    }
}
