//! Feature geometry: ROI pooling from raw feature maps and every
//! inter-sample distance the engine uses.
//!
//! Object features come from scaling a detection box onto the feature-map
//! grid, cropping, and applying global average pooling. Distances follow two
//! modes: `object` combines the worst (or average) object-pair distance with
//! an optional whole-image factor, `plain` compares one embedding per sample.
//!
//! All operations here are pure functions over immutable inputs; distance
//! evaluation is done lazily on demand, no pairwise matrix is materialized.
//! Invariants kept across the module: symmetry `d(u, v) = d(v, u)` with the
//! same floating-point value, non-negativity, and avg-aggregation never
//! exceeding max-aggregation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pool::{
    Aggregation, BoundingBox, DistanceConfig, DistanceMetric, DistanceMode, DmaxEstimation,
    FeatureVector, Pool, Sample,
};
use crate::rng::Lcg64;

/// Row-major activation grid (height outermost, channel innermost) plus the
/// pixel size of the image it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    image_height: u32,
    image_width: u32,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        image_height: u32,
        image_width: u32,
        data: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid_input(
                "feature map dimensions must be positive",
            ));
        }
        if image_height == 0 || image_width == 0 {
            return Err(Error::invalid_input("image dimensions must be positive"));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::invalid_input("feature map dimensions overflow"))?;
        if data.len() != expected {
            return Err(Error::invalid_input(format!(
                "feature map data length {} does not match {}x{}x{} = {}",
                data.len(),
                height,
                width,
                channels,
                expected
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input(
                "feature map contains a non-finite activation",
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            image_height,
            image_width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn at(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// The rectangle covering the whole grid.
    pub fn full_rect(&self) -> RoiRect {
        RoiRect {
            col_start: 0,
            col_end: self.width,
            row_start: 0,
            row_end: self.height,
        }
    }
}

/// Half-open cell range on the feature-map grid; always at least one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiRect {
    pub col_start: usize,
    pub col_end: usize,
    pub row_start: usize,
    pub row_end: usize,
}

impl RoiRect {
    fn validate_for(&self, map: &FeatureMap) -> Result<()> {
        if self.col_start >= self.col_end
            || self.row_start >= self.row_end
            || self.col_end > map.width
            || self.row_end > map.height
        {
            return Err(Error::invalid_input(format!(
                "ROI cols [{}, {}) rows [{}, {}) invalid for {}x{} map",
                self.col_start, self.col_end, self.row_start, self.row_end, map.width, map.height
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        (self.col_end - self.col_start) * (self.row_end - self.row_start)
    }
}

/// Scales a pixel box onto the feature-map grid.
///
/// The continuous box is `(x * f_w / i_w, y * f_h / i_h)` with size scaled the
/// same way; discretization takes `floor` of the start, `ceil` of the end,
/// clamps to the grid, and widens to at least one cell so every valid box
/// yields a non-empty crop.
pub fn roi_to_feature_coords(bbox: &BoundingBox, map: &FeatureMap) -> Result<RoiRect> {
    bbox.validate_against(map.image_width, map.image_height)?;

    let sx = map.width as f64 / map.image_width as f64;
    let sy = map.height as f64 / map.image_height as f64;

    let col_lo = bbox.x * sx;
    let col_hi = (bbox.x + bbox.w) * sx;
    let row_lo = bbox.y * sy;
    let row_hi = (bbox.y + bbox.h) * sy;

    let (col_start, col_end) = discretize(col_lo, col_hi, map.width);
    let (row_start, row_end) = discretize(row_lo, row_hi, map.height);

    Ok(RoiRect {
        col_start,
        col_end,
        row_start,
        row_end,
    })
}

fn discretize(lo: f64, hi: f64, bound: usize) -> (usize, usize) {
    let start = (lo.floor().max(0.0) as usize).min(bound - 1);
    let end = (hi.ceil().max(0.0) as usize).min(bound);
    if end <= start {
        (start, start + 1)
    } else {
        (start, end)
    }
}

/// Channel-wise mean of the activations inside `rect`.
pub fn roi_gap(map: &FeatureMap, rect: &RoiRect) -> Result<FeatureVector> {
    rect.validate_for(map)?;
    let mut sums = vec![0.0f64; map.channels];
    for row in rect.row_start..rect.row_end {
        for col in rect.col_start..rect.col_end {
            for (channel, sum) in sums.iter_mut().enumerate() {
                *sum += map.at(row, col, channel) as f64;
            }
        }
    }
    let count = rect.cell_count() as f64;
    for sum in &mut sums {
        *sum /= count;
    }
    FeatureVector::new(sums)
}

/// Whole-image feature: GAP with the ROI set to the entire map.
pub fn image_feature_from_map(map: &FeatureMap) -> Result<FeatureVector> {
    roi_gap(map, &map.full_rect())
}

/// Distance between two feature vectors under `metric`.
pub fn elem_distance(f: &FeatureVector, g: &FeatureVector, metric: DistanceMetric) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(Error::invalid_input(format!(
            "feature dimension mismatch: {} vs {}",
            f.dim(),
            g.dim()
        )));
    }
    Ok(match metric {
        DistanceMetric::SqEuclidean => sq_euclidean(f.values(), g.values()),
        DistanceMetric::Cosine => cosine_distance(f.values(), g.values()),
    })
}

#[inline]
fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        // sqrt(s) * sqrt(s) need not round back to s; identical inputs must
        // sit at distance zero exactly.
        return 0.0;
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        // Zero vectors happen with dead activations; treat as maximally
        // non-aligned rather than erroring.
        return 1.0;
    }
    (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)
}

/// Object-based distance: aggregate of `elem_distance` over every object
/// pair. When either sample carries no detections the result is the neutral
/// element 1.0, so the combined form degrades to pure scene distance.
pub fn object_distance(u: &Sample, v: &Sample, cfg: &DistanceConfig) -> Result<f64> {
    if u.objects.is_empty() || v.objects.is_empty() {
        return Ok(1.0);
    }
    let mut pair_distances = Vec::with_capacity(u.objects.len() * v.objects.len());
    for ou in &u.objects {
        for ov in &v.objects {
            pair_distances.push(elem_distance(&ou.feature, &ov.feature, cfg.metric)?);
        }
    }
    Ok(match cfg.aggregation {
        Aggregation::Max => pair_distances.iter().cloned().fold(f64::MIN, f64::max),
        Aggregation::Avg => {
            // Summing in sorted order makes the average symmetric in (u, v)
            // bit-for-bit; the raw enumeration order depends on argument
            // order.
            pair_distances.sort_unstable_by(f64::total_cmp);
            pair_distances.iter().sum::<f64>() / pair_distances.len() as f64
        }
    })
}

/// Object distance, optionally multiplied by the whole-image feature
/// distance so scene diversity contributes too.
pub fn combined_distance(u: &Sample, v: &Sample, cfg: &DistanceConfig) -> Result<f64> {
    let object_part = object_distance(u, v, cfg)?;
    if cfg.use_image_features {
        let scene = elem_distance(&u.image_feature, &v.image_feature, cfg.metric)?;
        Ok(object_part * scene)
    } else {
        Ok(object_part)
    }
}

/// Plain-mode distance over the single per-sample embedding. The
/// squared-euclidean metric is replaced by the euclidean norm here, matching
/// the core-set convention for classification embeddings.
pub fn plain_distance(u: &Sample, v: &Sample, cfg: &DistanceConfig) -> Result<f64> {
    match cfg.metric {
        DistanceMetric::SqEuclidean => {
            if u.image_feature.dim() != v.image_feature.dim() {
                return Err(Error::invalid_input(format!(
                    "feature dimension mismatch: {} vs {}",
                    u.image_feature.dim(),
                    v.image_feature.dim()
                )));
            }
            Ok(sq_euclidean(u.image_feature.values(), v.image_feature.values()).sqrt())
        }
        DistanceMetric::Cosine => elem_distance(&u.image_feature, &v.image_feature, cfg.metric),
    }
}

/// Distance between two samples under the configured mode.
pub fn pair_distance(u: &Sample, v: &Sample, cfg: &DistanceConfig) -> Result<f64> {
    match cfg.mode {
        DistanceMode::Object => combined_distance(u, v, cfg),
        DistanceMode::Plain => plain_distance(u, v, cfg),
    }
}

/// Maximum pairwise distance in the pool, exact or sampled per
/// `cfg.dmax_estimation`. Recomputed per invocation; never cached across
/// pools because embeddings change every cycle.
pub fn d_max(pool: &Pool, cfg: &DistanceConfig) -> Result<f64> {
    let n = pool.len();
    if n < 2 {
        return Err(Error::invalid_input(
            "d_max needs at least two samples in the pool",
        ));
    }
    let value = match cfg.dmax_estimation {
        DmaxEstimation::Exact => exact_d_max(pool, cfg)?,
        DmaxEstimation::Sampled { pair_count, seed } => {
            if pair_count == 0 {
                return Err(Error::invalid_input("sampled d_max needs pair_count >= 1"));
            }
            sampled_d_max(pool, cfg, pair_count, seed)?
        }
    };
    if value == 0.0 {
        return Err(Error::degenerate(
            "all samples are identical (d_max = 0), kernel bandwidth cannot be resolved",
        ));
    }
    Ok(value)
}

fn exact_d_max(pool: &Pool, cfg: &DistanceConfig) -> Result<f64> {
    let n = pool.len();
    // Parallel max over rows; max is order-independent, so the result is
    // identical to a sequential scan regardless of thread count.
    (0..n - 1)
        .into_par_iter()
        .map(|a| {
            let mut best = 0.0f64;
            for b in a + 1..n {
                let d = pair_distance(pool.get(a), pool.get(b), cfg)?;
                best = best.max(d);
            }
            Ok(best)
        })
        .try_reduce(|| 0.0, |x, y| Ok(x.max(y)))
}

fn sampled_d_max(pool: &Pool, cfg: &DistanceConfig, pair_count: usize, seed: u64) -> Result<f64> {
    let n = pool.len();
    let mut rng = Lcg64::new(seed);
    let mut best = 0.0f64;
    for _ in 0..pair_count {
        let a = rng.below(n);
        let mut b = rng.below(n - 1);
        if b >= a {
            b += 1;
        }
        let d = pair_distance(pool.get(a), pool.get(b), cfg)?;
        best = best.max(d);
    }
    Ok(best)
}
