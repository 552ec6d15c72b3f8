//! Desk-scale synthetic benchmark: clustered pools with controlled
//! uncertainty ranges and exact duplicates, run through every strategy and
//! scored on redundancy/informativeness metrics.
//!
//! Nothing here reproduces any training-based result; the simulator exists so
//! selection behavior can be compared quantitatively without a detector in
//! the loop.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featgeom::{self, pair_distance};
use crate::pool::{
    DistanceConfig, FeatureVector, Pool, Sample, SelectionConfig, SimilarityConfig, Strategy,
};
use crate::rng::Lcg64;
use crate::selector::{self, run_selection_with_provider, KernelSimilarity, SimilarityProvider};
use crate::simcore::{update_score, Kernel};

/// One isotropic gaussian blob of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: FeatureVector,
    pub std: f64,
    pub count: usize,
    /// Per-sample uncertainty is drawn uniformly from `[low, high]`.
    pub uncertainty_range: [f64; 2],
}

/// A full synthetic experiment: pool shape, seeds, and the selection setup
/// shared by every strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimExperiment {
    pub clusters: Vec<ClusterSpec>,
    pub dim: usize,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub strategies: Vec<Strategy>,
    pub similarity: SimilarityConfig,
    pub distance: DistanceConfig,
    /// Fraction of generated samples appended again as exact copies, to
    /// stress redundancy handling.
    #[serde(default)]
    pub duplicate_fraction: f64,
}

impl SimExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::invalid_input(
                "experiment needs at least one cluster",
            ));
        }
        if self.dim == 0 {
            return Err(Error::invalid_input("dim must be positive"));
        }
        for (i, cluster) in self.clusters.iter().enumerate() {
            if cluster.center.dim() != self.dim {
                return Err(Error::invalid_input(format!(
                    "cluster {i} center has dimension {}, expected {}",
                    cluster.center.dim(),
                    self.dim
                )));
            }
            if cluster.count == 0 {
                return Err(Error::invalid_input(format!(
                    "cluster {i} count must be >= 1"
                )));
            }
            let std_ok = cluster.std.is_finite() && cluster.std > 0.0;
            if !std_ok {
                return Err(Error::invalid_input(format!(
                    "cluster {i} std must be positive and finite"
                )));
            }
            let [lo, hi] = cluster.uncertainty_range;
            if !(0.0 <= lo && lo <= hi) {
                return Err(Error::invalid_input(format!(
                    "cluster {i} uncertainty range [{lo}, {hi}] must satisfy 0 <= low <= high"
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid_input("experiment needs at least one seed"));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid_input(
                "experiment needs at least one strategy",
            ));
        }
        if !(0.0..=1.0).contains(&self.duplicate_fraction) {
            return Err(Error::invalid_input(
                "duplicate_fraction must lie in [0, 1]",
            ));
        }
        let total: usize = self.clusters.iter().map(|c| c.count).sum();
        let duplicates = duplicate_count(total, self.duplicate_fraction);
        if self.budget == 0 || self.budget > total + duplicates {
            return Err(Error::invalid_input(format!(
                "budget {} out of range for pool of {}",
                self.budget,
                total + duplicates
            )));
        }
        self.similarity.validate()?;
        self.distance.validate()
    }

    pub fn pool_size(&self) -> usize {
        let total: usize = self.clusters.iter().map(|c| c.count).sum();
        total + duplicate_count(total, self.duplicate_fraction)
    }
}

fn duplicate_count(total: usize, fraction: f64) -> usize {
    (fraction * total as f64).round() as usize
}

/// Per-strategy metrics for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub seed: u64,
    pub strategy: Strategy,
    /// Batch objective of the selected set under the sum rule.
    pub objective_sum: f64,
    /// Ingestion-score total of the selected set.
    pub total_uncertainty: f64,
    /// Max over the pool of the distance to the nearest selected sample.
    pub coverage_radius: f64,
    /// Mean similarity over selected pairs; 0 for singleton selections.
    pub mean_intra_similarity: f64,
    /// Clamped score mass left in the unselected pool after the update chain.
    pub residual_information: f64,
    pub wall_time: Duration,
}

/// Draws the clustered pool for one seed. Ids are `c{cluster}_{index}`;
/// duplicated samples reuse the source sample with an `_dup` suffix.
pub fn generate_pool(spec: &SimExperiment, seed: u64) -> Result<Pool> {
    spec.validate()?;
    let mut rng = Lcg64::new(seed);
    let mut samples = Vec::with_capacity(spec.pool_size());

    for (cluster_idx, cluster) in spec.clusters.iter().enumerate() {
        let center = cluster.center.values();
        for index in 0..cluster.count {
            let mut values = Vec::with_capacity(spec.dim);
            while values.len() < spec.dim {
                let (a, b) = rng.normal_pair();
                values.push(center[values.len()] + cluster.std * a);
                if values.len() < spec.dim {
                    values.push(center[values.len()] + cluster.std * b);
                }
            }
            let [lo, hi] = cluster.uncertainty_range;
            let sigma = rng.uniform(lo, hi);
            samples.push(Sample::plain(
                format!("c{cluster_idx}_{index}"),
                sigma,
                values,
            )?);
        }
    }

    let total = samples.len();
    let duplicates = duplicate_count(total, spec.duplicate_fraction);
    if duplicates > 0 {
        // Partial Fisher-Yates over indices picks the duplicated samples.
        let mut indices: Vec<usize> = (0..total).collect();
        for t in 0..duplicates {
            let j = t + rng.below(total - t);
            indices.swap(t, j);
        }
        for &src in indices.iter().take(duplicates) {
            let mut copy = samples[src].clone();
            copy.id.push_str("_dup");
            samples.push(copy);
        }
    }

    Pool::new(samples)
}

/// Replays the sum-variant update chain for `order` over the whole pool and
/// returns the clamped score mass left on unselected samples.
pub fn residual_information(
    pool: &Pool,
    order: &[usize],
    provider: &dyn SimilarityProvider,
    clamp: bool,
) -> f64 {
    let n = pool.len();
    let mut working = pool.uncertainties();
    let mut selected = vec![false; n];
    for &pick in order {
        let marginal = working[pick];
        selected[pick] = true;
        for u in 0..n {
            if !selected[u] {
                working[u] = update_score(working[u], provider.sim(u, pick), marginal, clamp);
            }
        }
    }
    working
        .iter()
        .zip(&selected)
        .filter(|(_, &sel)| !sel)
        .map(|(&w, _)| w.max(0.0))
        .sum()
}

/// Id-based wrapper around [`residual_information`].
pub fn residual_information_by_id<S: AsRef<str>>(
    pool: &Pool,
    ids: &[S],
    provider: &dyn SimilarityProvider,
    clamp: bool,
) -> Result<f64> {
    let order: Vec<usize> = ids
        .iter()
        .map(|id| pool.require_position(id.as_ref()))
        .collect::<Result<_>>()?;
    Ok(residual_information(pool, &order, provider, clamp))
}

/// Runs every strategy on every seed and reports the metric table in seed
/// order. Seeds execute independently (in parallel); each seed resolves its
/// own pool diameter and kernel.
pub fn run_experiment(spec: &SimExperiment) -> Result<Vec<StrategyReport>> {
    spec.validate()?;
    let per_seed: Vec<Vec<StrategyReport>> = spec
        .seeds
        .par_iter()
        .map(|&seed| run_seed(spec, seed))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

fn run_seed(spec: &SimExperiment, seed: u64) -> Result<Vec<StrategyReport>> {
    let pool = generate_pool(spec, seed)?;
    let d_max = featgeom::d_max(&pool, &spec.distance)?;
    let kernel = Kernel::resolve(&spec.similarity, d_max)?;
    let provider = KernelSimilarity::with_kernel(&pool, &spec.distance, kernel);

    let mut reports = Vec::with_capacity(spec.strategies.len());
    for &strategy in &spec.strategies {
        let cfg = SelectionConfig {
            strategy,
            budget: spec.budget,
            similarity: spec.similarity,
            distance: spec.distance,
            clamp_scores: false,
            seed,
        };
        let started = Instant::now();
        let result = run_selection_with_provider(&pool, &cfg, &provider)?;
        let wall_time = started.elapsed();

        let positions = result.selected_positions(&pool);
        reports.push(StrategyReport {
            seed,
            strategy,
            objective_sum: selector::objective_sum(&pool, &positions, &provider),
            total_uncertainty: positions.iter().map(|&p| pool.get(p).uncertainty).sum(),
            coverage_radius: coverage_radius(&pool, &positions, &spec.distance)?,
            mean_intra_similarity: mean_intra_similarity(&positions, &provider),
            // Clamped chain keeps the metric monotone along greedy prefixes.
            residual_information: residual_information(&pool, &positions, &provider, true),
            wall_time,
        });
    }
    Ok(reports)
}

/// Max over the pool of the distance to the nearest selected sample.
pub fn coverage_radius(pool: &Pool, selected: &[usize], distance: &DistanceConfig) -> Result<f64> {
    let mut radius = 0.0f64;
    for pos in 0..pool.len() {
        if selected.contains(&pos) {
            continue;
        }
        let mut nearest = f64::INFINITY;
        for &s in selected {
            nearest = nearest.min(pair_distance(pool.get(pos), pool.get(s), distance)?);
        }
        radius = radius.max(nearest);
    }
    Ok(radius)
}

/// Mean similarity over unordered selected pairs; 0 when fewer than two
/// samples are selected.
pub fn mean_intra_similarity(selected: &[usize], provider: &dyn SimilarityProvider) -> f64 {
    if selected.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in selected.iter().enumerate() {
        for &b in &selected[i + 1..] {
            total += provider.sim(a, b);
            pairs += 1;
        }
    }
    total / pairs as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{DistanceMetric, SimilarityKind};
    use crate::selector::MatrixSimilarity;

    fn small_spec() -> SimExperiment {
        SimExperiment {
            clusters: vec![
                ClusterSpec {
                    center: FeatureVector::new(vec![0.0, 0.0]).unwrap(),
                    std: 0.5,
                    count: 5,
                    uncertainty_range: [0.8, 1.0],
                },
                ClusterSpec {
                    center: FeatureVector::new(vec![10.0, 10.0]).unwrap(),
                    std: 0.5,
                    count: 5,
                    uncertainty_range: [0.1, 0.4],
                },
            ],
            dim: 2,
            seeds: vec![1, 2],
            budget: 4,
            strategies: vec![Strategy::Uncertainty, Strategy::NorisSum],
            similarity: SimilarityConfig {
                kind: SimilarityKind::Gaussian,
                alpha: 0.5,
            },
            distance: DistanceConfig::plain_default(),
            duplicate_fraction: 0.0,
        }
    }

    #[test]
    fn generate_pool_counts_and_ids() {
        let spec = small_spec();
        let pool = generate_pool(&spec, 1).unwrap();
        assert_eq!(pool.len(), 10);
        assert!(pool.position("c0_0").is_some());
        assert!(pool.position("c1_4").is_some());
    }

    #[test]
    fn generate_pool_deterministic() {
        let spec = small_spec();
        let a = generate_pool(&spec, 7).unwrap();
        let b = generate_pool(&spec, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_pool(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generate_pool_tiny_std_hugs_center() {
        let mut spec = small_spec();
        spec.clusters[0].std = 1e-9;
        let pool = generate_pool(&spec, 3).unwrap();
        for i in 0..5 {
            let sample = pool.get(i);
            for v in sample.image_feature.values() {
                assert!(v.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn generate_pool_duplicates() {
        let mut spec = small_spec();
        spec.duplicate_fraction = 0.3;
        let pool = generate_pool(&spec, 1).unwrap();
        assert_eq!(pool.len(), 13);
        let dup_ids: Vec<&str> = pool
            .iter()
            .filter(|s| s.id.ends_with("_dup"))
            .map(|s| s.id.as_str())
            .collect();
        assert_eq!(dup_ids.len(), 3);
        for dup in dup_ids {
            let src = dup.trim_end_matches("_dup");
            let src_pos = pool.position(src).unwrap();
            let dup_pos = pool.position(dup).unwrap();
            assert_eq!(
                pool.get(src_pos).image_feature,
                pool.get(dup_pos).image_feature
            );
            assert_eq!(pool.get(src_pos).uncertainty, pool.get(dup_pos).uncertainty);
        }
    }

    #[test]
    fn residual_empty_selection_is_total_mass() {
        let (pool, matrix) = hand_pool_matrix();
        let total: f64 = pool.uncertainties().iter().sum();
        assert_eq!(residual_information(&pool, &[], &matrix, false), total);
    }

    #[test]
    fn residual_zero_sim_subtracts_selected() {
        let (pool, _) = hand_pool_matrix();
        let zeros = MatrixSimilarity::new(vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let total: f64 = pool.uncertainties().iter().sum();
        let got = residual_information(&pool, &[0, 2], &zeros, false);
        assert!((got - (total - 0.9 - 0.7)).abs() < 1e-12);
    }

    #[test]
    fn residual_hand_chain() {
        let (pool, matrix) = hand_pool_matrix();
        // Step 1 (pick 0, working 0.9): w1 = -0.01, w2 = 0.61, w3 = 0.21.
        // Step 2 (pick 2, working 0.61): w1 = -0.01 - 0.1*0.61, w3 = 0.21 - 0.2*0.61.
        let w1: f64 = (0.8 - 0.9 * 0.9) - 0.1 * (0.7 - 0.1 * 0.9);
        let w3: f64 = (0.3 - 0.1 * 0.9) - 0.2 * (0.7 - 0.1 * 0.9);
        let expected = w1.max(0.0) + w3.max(0.0);
        let got = residual_information(&pool, &[0, 2], &matrix, false);
        assert_eq!(got, expected);
        assert!((got - 0.088).abs() < 1e-12);
    }

    #[test]
    fn residual_by_id_rejects_unknown() {
        let (pool, matrix) = hand_pool_matrix();
        assert!(residual_information_by_id(&pool, &["0", "nope"], &matrix, false).is_err());
    }

    #[test]
    fn residual_monotone_along_greedy_prefixes() {
        let spec = small_spec();
        let pool = generate_pool(&spec, 5).unwrap();
        let d_max = featgeom::d_max(&pool, &spec.distance).unwrap();
        let kernel = Kernel::resolve(&spec.similarity, d_max).unwrap();
        let provider = KernelSimilarity::with_kernel(&pool, &spec.distance, kernel);
        let result = selector::noris_sum_select(&pool, pool.len(), &provider, true).unwrap();
        let order = result.selected_positions(&pool);
        let mut prev = f64::INFINITY;
        for k in 0..=order.len() {
            let r = residual_information(&pool, &order[..k], &provider, true);
            assert!(r <= prev + 1e-12, "k = {k}: {r} > {prev}");
            prev = r;
        }
    }

    #[test]
    fn run_experiment_shape_and_determinism() {
        let spec = small_spec();
        let reports = run_experiment(&spec).unwrap();
        assert_eq!(reports.len(), 4); // 2 seeds x 2 strategies
        assert_eq!(reports[0].seed, 1);
        assert_eq!(reports[2].seed, 2);

        let again = run_experiment(&spec).unwrap();
        for (a, b) in reports.iter().zip(&again) {
            assert_eq!(a.strategy, b.strategy);
            assert_eq!(a.objective_sum, b.objective_sum);
            assert_eq!(a.total_uncertainty, b.total_uncertainty);
            assert_eq!(a.coverage_radius, b.coverage_radius);
            assert_eq!(a.mean_intra_similarity, b.mean_intra_similarity);
            assert_eq!(a.residual_information, b.residual_information);
        }
    }

    #[test]
    fn top_b_maximizes_total_uncertainty() {
        let mut spec = small_spec();
        spec.strategies = Strategy::ALL.to_vec();
        spec.duplicate_fraction = 0.2;
        let reports = run_experiment(&spec).unwrap();
        for seed in [1u64, 2] {
            let per_seed: Vec<&StrategyReport> =
                reports.iter().filter(|r| r.seed == seed).collect();
            let top = per_seed
                .iter()
                .find(|r| r.strategy == Strategy::Uncertainty)
                .unwrap();
            for r in &per_seed {
                assert!(r.total_uncertainty <= top.total_uncertainty + 1e-12);
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small_spec();
        spec.dim = 3;
        assert!(spec.validate().is_err());

        let mut spec = small_spec();
        spec.duplicate_fraction = 1.5;
        assert!(spec.validate().is_err());

        let mut spec = small_spec();
        spec.budget = 0;
        assert!(spec.validate().is_err());

        let mut spec = small_spec();
        spec.clusters[0].uncertainty_range = [0.5, 0.2];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn cosine_distance_mode_supported() {
        let mut spec = small_spec();
        spec.distance.metric = DistanceMetric::Cosine;
        let reports = run_experiment(&spec).unwrap();
        assert_eq!(reports.len(), 4);
    }

    fn hand_pool_matrix() -> (Pool, MatrixSimilarity) {
        let pool = Pool::new(vec![
            Sample::plain("0", 0.9, vec![0.0]).unwrap(),
            Sample::plain("1", 0.8, vec![1.0]).unwrap(),
            Sample::plain("2", 0.7, vec![2.0]).unwrap(),
            Sample::plain("3", 0.3, vec![3.0]).unwrap(),
        ])
        .unwrap();
        let matrix = MatrixSimilarity::new(vec![
            vec![1.0, 0.9, 0.1, 0.1],
            vec![0.9, 1.0, 0.1, 0.1],
            vec![0.1, 0.1, 1.0, 0.2],
            vec![0.1, 0.1, 0.2, 1.0],
        ])
        .unwrap();
        (pool, matrix)
    }
}
