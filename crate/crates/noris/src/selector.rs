//! Selection strategies: the redundancy-aware greedy variants, the batch
//! objectives they chase, classic baselines, and a brute-force subset oracle.
//!
//! The greedy loop is sequential by contract; every argmax breaks ties toward
//! the lowest pool position, so results are bit-for-bit reproducible. The
//! sum variant subtracts the *working* (already reduced) score of each pick
//! from its neighbors, exactly as the in-place pseudocode stores it; this
//! deliberately differs from evaluating the batch objective with ingestion
//! scores, and both views are exposed (greedy trace vs `objective_sum`).
//!
//! Runtime is `B` argmax scans and at most `B * n` similarity evaluations
//! for either variant; the counters in [`SelectionStats`] record both.

use crate::error::{Error, Result};
use crate::featgeom::{self, pair_distance};
use crate::pool::{
    DistanceConfig, Pool, SelectedSample, SelectionConfig, SelectionResult, SelectionStats,
    SimilarityConfig, Strategy,
};
use crate::rng::Lcg64;
use crate::simcore::Kernel;

/// Source of pairwise similarities for a pool, addressed by position.
///
/// Contract (not enforced at runtime for kernel-backed providers, validated
/// for matrix-backed ones): `sim(u, u) = 1` and `sim(u, v) = sim(v, u)`.
pub trait SimilarityProvider: Sync {
    /// Number of samples the provider covers.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Similarity in `[0, 1]` between pool positions `a` and `b`.
    fn sim(&self, a: usize, b: usize) -> f64;

    /// Pool diameter backing this provider, when kernel-based.
    fn d_max(&self) -> Option<f64> {
        None
    }

    /// Resolved kernel bandwidth, when kernel-based.
    fn lambda(&self) -> Option<f64> {
        None
    }
}

/// Explicit similarity matrix, mainly for tests and the CLI injection hook.
#[derive(Debug, Clone)]
pub struct MatrixSimilarity {
    n: usize,
    values: Vec<f64>,
}

impl MatrixSimilarity {
    /// Validates squareness, unit diagonal, exact symmetry, and the `[0, 1]`
    /// range.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid_input("similarity matrix must be non-empty"));
        }
        let mut values = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid_input(format!(
                    "similarity matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return Err(Error::invalid_input(format!(
                    "similarity matrix diagonal entry {i} must be 1.0"
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid_input(format!(
                        "similarity matrix entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if values[j * n + i] != v {
                    return Err(Error::invalid_input(format!(
                        "similarity matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }
}

impl SimilarityProvider for MatrixSimilarity {
    fn len(&self) -> usize {
        self.n
    }

    fn sim(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }
}

/// Default provider: featgeom distances composed with a resolved kernel.
/// Distances are evaluated on demand; nothing is cached.
pub struct KernelSimilarity<'a> {
    pool: &'a Pool,
    distance: DistanceConfig,
    kernel: Kernel,
    d_max: Option<f64>,
}

impl<'a> KernelSimilarity<'a> {
    /// Computes the pool diameter, resolves the bandwidth from
    /// `similarity.alpha`, and builds the provider.
    pub fn from_pool(
        pool: &'a Pool,
        distance: &DistanceConfig,
        similarity: &SimilarityConfig,
    ) -> Result<Self> {
        distance.validate()?;
        let d_max = featgeom::d_max(pool, distance)?;
        let kernel = Kernel::resolve(similarity, d_max)?;
        Ok(Self {
            pool,
            distance: *distance,
            kernel,
            d_max: Some(d_max),
        })
    }

    /// Builds the provider around an explicit kernel, skipping diameter
    /// estimation.
    pub fn with_kernel(pool: &'a Pool, distance: &DistanceConfig, kernel: Kernel) -> Self {
        Self {
            pool,
            distance: *distance,
            kernel,
            d_max: None,
        }
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }
}

impl SimilarityProvider for KernelSimilarity<'_> {
    fn len(&self) -> usize {
        self.pool.len()
    }

    fn sim(&self, a: usize, b: usize) -> f64 {
        if a == b {
            // Keeps sim(u, u) = 1 even for object-mode samples without
            // detections, where the raw product distance is non-zero.
            return 1.0;
        }
        let d = pair_distance(self.pool.get(a), self.pool.get(b), &self.distance)
            .expect("pool was validated at construction");
        self.kernel.similarity(d)
    }

    fn d_max(&self) -> Option<f64> {
        self.d_max
    }

    fn lambda(&self) -> Option<f64> {
        Some(self.kernel.lambda)
    }
}

fn check_budget(pool: &Pool, budget: usize) -> Result<()> {
    if budget == 0 || budget > pool.len() {
        return Err(Error::invalid_input(format!(
            "budget must lie in [1, {}], got {budget}",
            pool.len()
        )));
    }
    Ok(())
}

fn check_provider(pool: &Pool, provider: &dyn SimilarityProvider) -> Result<()> {
    if provider.len() != pool.len() {
        return Err(Error::invalid_input(format!(
            "similarity provider covers {} samples, pool has {}",
            provider.len(),
            pool.len()
        )));
    }
    Ok(())
}

/// Argmax over `scores` restricted to positions where `eligible` holds; ties
/// go to the lowest position.
fn argmax_eligible(scores: &[f64], eligible: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (pos, (&score, &open)) in scores.iter().zip(eligible).enumerate() {
        if !open {
            continue;
        }
        match best {
            Some((_, top)) if score <= top => {}
            _ => best = Some((pos, score)),
        }
    }
    best.map(|(pos, _)| pos)
}

fn result_from_picks(
    pool: &Pool,
    picks: Vec<(usize, f64)>,
    stats: SelectionStats,
) -> SelectionResult {
    let selected = picks
        .into_iter()
        .enumerate()
        .map(|(i, (pos, marginal))| SelectedSample {
            id: pool.get(pos).id.clone(),
            step: i + 1,
            marginal_score: marginal,
        })
        .collect();
    SelectionResult {
        selected,
        d_max_used: None,
        lambda_used: None,
        objective_sum: None,
        objective_max: None,
        stats,
    }
}

/// Attaches provider metadata and both batch objectives to a finished
/// selection.
fn attach_objectives(
    pool: &Pool,
    mut result: SelectionResult,
    provider: &dyn SimilarityProvider,
) -> SelectionResult {
    let positions = result.selected_positions(pool);
    result.objective_sum = Some(objective_sum(pool, &positions, provider));
    result.objective_max = Some(objective_max(pool, &positions, provider));
    result.d_max_used = provider.d_max();
    result.lambda_used = provider.lambda();
    result
}

/// Plain top-B selection by information score, descending, ties broken by
/// pool position.
pub fn top_b_uncertainty(pool: &Pool, budget: usize) -> Result<SelectionResult> {
    check_budget(pool, budget)?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool.get(b)
            .uncertainty
            .partial_cmp(&pool.get(a).uncertainty)
            .expect("uncertainties are finite")
            .then(a.cmp(&b))
    });
    let picks = order
        .into_iter()
        .take(budget)
        .map(|pos| (pos, pool.get(pos).uncertainty))
        .collect();
    Ok(result_from_picks(pool, picks, SelectionStats::default()))
}

/// Greedy gain selection where every remaining sample is discounted by its
/// similarity to the pick.
///
/// Working scores start at the ingestion scores; each step picks the argmax,
/// records it at its current working score, then subtracts
/// `sim(u, pick) * working(pick)` from every unselected `u`.
pub fn noris_sum_select(
    pool: &Pool,
    budget: usize,
    provider: &dyn SimilarityProvider,
    clamp: bool,
) -> Result<SelectionResult> {
    check_budget(pool, budget)?;
    check_provider(pool, provider)?;

    let n = pool.len();
    let mut working = pool.uncertainties();
    let mut open = vec![true; n];
    let mut picks = Vec::with_capacity(budget);
    let mut stats = SelectionStats::default();

    for _ in 0..budget {
        let pick = argmax_eligible(&working, &open).expect("budget <= pool size");
        stats.argmax_scans += 1;
        let marginal = working[pick];
        open[pick] = false;
        picks.push((pick, marginal));

        for u in 0..n {
            if !open[u] {
                continue;
            }
            let s = provider.sim(u, pick);
            stats.sim_evals += 1;
            working[u] = crate::simcore::update_score(working[u], s, marginal, clamp);
        }
    }

    Ok(attach_objectives(
        pool,
        result_from_picks(pool, picks, stats),
        provider,
    ))
}

/// Greedy gain selection where only the single most similar remaining sample
/// is discounted after each pick.
pub fn noris_max_select(
    pool: &Pool,
    budget: usize,
    provider: &dyn SimilarityProvider,
    clamp: bool,
) -> Result<SelectionResult> {
    check_budget(pool, budget)?;
    check_provider(pool, provider)?;

    let n = pool.len();
    let mut working = pool.uncertainties();
    let mut open = vec![true; n];
    let mut picks = Vec::with_capacity(budget);
    let mut stats = SelectionStats::default();

    for _ in 0..budget {
        let pick = argmax_eligible(&working, &open).expect("budget <= pool size");
        stats.argmax_scans += 1;
        let marginal = working[pick];
        open[pick] = false;
        picks.push((pick, marginal));

        let mut closest: Option<(usize, f64)> = None;
        for (u, _) in open.iter().enumerate().filter(|(_, &is_open)| is_open) {
            let s = provider.sim(u, pick);
            stats.sim_evals += 1;
            match closest {
                Some((_, top)) if s <= top => {}
                _ => closest = Some((u, s)),
            }
        }
        if let Some((u_c, s)) = closest {
            working[u_c] = crate::simcore::update_score(working[u_c], s, marginal, clamp);
        }
    }

    Ok(attach_objectives(
        pool,
        result_from_picks(pool, picks, stats),
        provider,
    ))
}

/// Batch objective where each member pays for every similar co-selected
/// sample: `sum_u [sigma(u) - sum_{v != u} sim(u, v) * sigma(v)]`, evaluated
/// with ingestion scores.
pub fn objective_sum(pool: &Pool, positions: &[usize], provider: &dyn SimilarityProvider) -> f64 {
    let mut total = 0.0;
    for &u in positions {
        let mut value = pool.get(u).uncertainty;
        for &v in positions {
            if v != u {
                value -= provider.sim(u, v) * pool.get(v).uncertainty;
            }
        }
        total += value;
    }
    total
}

/// Batch objective where each member pays only for its most similar
/// co-selected sample. Singleton sets evaluate to the member's score.
pub fn objective_max(pool: &Pool, positions: &[usize], provider: &dyn SimilarityProvider) -> f64 {
    let mut total = 0.0;
    for &u in positions {
        let mut closest: Option<(usize, f64)> = None;
        for &v in positions {
            if v == u {
                continue;
            }
            let s = provider.sim(u, v);
            match closest {
                Some((best_pos, top)) => {
                    if s > top || (s == top && v < best_pos) {
                        closest = Some((v, s));
                    }
                }
                None => closest = Some((v, s)),
            }
        }
        total += match closest {
            Some((v_c, s)) => pool.get(u).uncertainty - s * pool.get(v_c).uncertainty,
            None => pool.get(u).uncertainty,
        };
    }
    total
}

/// Id-based wrapper around [`objective_sum`].
pub fn objective_sum_by_id<S: AsRef<str>>(
    pool: &Pool,
    ids: &[S],
    provider: &dyn SimilarityProvider,
) -> Result<f64> {
    let positions = resolve_ids(pool, ids)?;
    Ok(objective_sum(pool, &positions, provider))
}

/// Id-based wrapper around [`objective_max`].
pub fn objective_max_by_id<S: AsRef<str>>(
    pool: &Pool,
    ids: &[S],
    provider: &dyn SimilarityProvider,
) -> Result<f64> {
    let positions = resolve_ids(pool, ids)?;
    Ok(objective_max(pool, &positions, provider))
}

fn resolve_ids<S: AsRef<str>>(pool: &Pool, ids: &[S]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| pool.require_position(id.as_ref()))
        .collect()
}

/// Which batch objective the oracle maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Sum,
    Max,
}

/// Cap on the number of subsets the oracle will enumerate.
pub const BRUTE_FORCE_GUARD: u64 = 10_000_000;

/// Exhaustive maximizer over all size-`budget` subsets. Returns the best
/// position set (lexicographically smallest among ties) and its objective.
pub fn brute_force_optimum(
    pool: &Pool,
    budget: usize,
    provider: &dyn SimilarityProvider,
    objective: ObjectiveKind,
) -> Result<(Vec<usize>, f64)> {
    check_budget(pool, budget)?;
    check_provider(pool, provider)?;

    let n = pool.len();
    let combinations = binomial(n, budget);
    if combinations > BRUTE_FORCE_GUARD {
        return Err(Error::too_large(format!(
            "C({n}, {budget}) = {combinations} subsets exceeds the {BRUTE_FORCE_GUARD} guard"
        )));
    }

    let evaluate = |subset: &[usize]| match objective {
        ObjectiveKind::Sum => objective_sum(pool, subset, provider),
        ObjectiveKind::Max => objective_max(pool, subset, provider),
    };

    // Lexicographic enumeration + strict improvement keeps the smallest
    // maximizer among ties.
    let mut subset: Vec<usize> = (0..budget).collect();
    let mut best = subset.clone();
    let mut best_value = evaluate(&subset);
    while next_combination(&mut subset, n) {
        let value = evaluate(&subset);
        if value > best_value {
            best_value = value;
            best.copy_from_slice(&subset);
        }
    }
    Ok((best, best_value))
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Farthest-first traversal seeded at position 0; the marginal score of each
/// later pick is its distance to the nearest already-selected sample (0.0
/// for the seed, which has no reference set yet).
pub fn k_center_greedy(
    pool: &Pool,
    budget: usize,
    distance: &DistanceConfig,
) -> Result<SelectionResult> {
    check_budget(pool, budget)?;
    let n = pool.len();
    let mut picks = vec![(0usize, 0.0f64)];
    let mut min_dist = vec![f64::INFINITY; n];
    let mut open = vec![true; n];
    open[0] = false;

    let mut last = 0usize;
    for _ in 1..budget {
        for u in 0..n {
            if open[u] {
                let d = pair_distance(pool.get(u), pool.get(last), distance)?;
                min_dist[u] = min_dist[u].min(d);
            }
        }
        let pick = argmax_eligible(&min_dist, &open).expect("budget <= pool size");
        picks.push((pick, min_dist[pick]));
        open[pick] = false;
        last = pick;
    }

    Ok(result_from_picks(pool, picks, SelectionStats::default()))
}

/// Hybrid baseline: seed at the most uncertain sample, then maximize
/// `uncertainty * distance-to-selection`.
pub fn hybrid_product(
    pool: &Pool,
    budget: usize,
    distance: &DistanceConfig,
) -> Result<SelectionResult> {
    check_budget(pool, budget)?;
    let n = pool.len();
    let sigmas = pool.uncertainties();
    let all_open = vec![true; n];
    let seed = argmax_eligible(&sigmas, &all_open).expect("pool is non-empty");

    let mut picks = vec![(seed, sigmas[seed])];
    let mut open = vec![true; n];
    open[seed] = false;
    let mut min_dist = vec![f64::INFINITY; n];
    let mut scores = vec![f64::NEG_INFINITY; n];

    let mut last = seed;
    for _ in 1..budget {
        for u in 0..n {
            if open[u] {
                let d = pair_distance(pool.get(u), pool.get(last), distance)?;
                min_dist[u] = min_dist[u].min(d);
                scores[u] = sigmas[u] * min_dist[u];
            }
        }
        let pick = argmax_eligible(&scores, &open).expect("budget <= pool size");
        picks.push((pick, scores[pick]));
        open[pick] = false;
        last = pick;
    }

    Ok(result_from_picks(pool, picks, SelectionStats::default()))
}

/// Uniform baseline: every sample gets a score from the seeded generator and
/// the top `budget` scores win.
pub fn random_select(pool: &Pool, budget: usize, seed: u64) -> Result<SelectionResult> {
    check_budget(pool, budget)?;
    let mut rng = Lcg64::new(seed);
    let scores: Vec<f64> = (0..pool.len()).map(|_| rng.next_f64()).collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let picks = order
        .into_iter()
        .take(budget)
        .map(|pos| (pos, scores[pos]))
        .collect();
    Ok(result_from_picks(pool, picks, SelectionStats::default()))
}

/// Least-confidence score: one minus the maximum class probability.
pub fn least_confidence(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::invalid_input("probability vector must be non-empty"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid_input(
            "probability vector entries must be finite and non-negative",
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid_input(format!(
            "probability vector sums to {sum}, expected 1 within 1e-6"
        )));
    }
    let max = probs.iter().cloned().fold(f64::MIN, f64::max);
    Ok(1.0 - max)
}

/// How per-object uncertainties collapse into one per-image score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncertaintyAggregation {
    #[default]
    Mean,
    Max,
}

/// Collapses per-object uncertainty values into a per-image score; the mean
/// is stable under object-count variation, max is available for
/// experimentation.
pub fn aggregate_object_uncertainty(
    values: &[f64],
    aggregation: UncertaintyAggregation,
) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid_input(
            "cannot aggregate an empty uncertainty list",
        ));
    }
    Ok(match aggregation {
        UncertaintyAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        UncertaintyAggregation::Max => values.iter().cloned().fold(f64::MIN, f64::max),
    })
}

/// Runs the configured strategy end to end: resolves the pool diameter and
/// kernel, selects, and evaluates both batch objectives on the result.
pub fn run_selection(pool: &Pool, cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate(pool.len())?;
    let distance = distance_with_seed(cfg);
    let provider = KernelSimilarity::from_pool(pool, &distance, &cfg.similarity)?;
    run_selection_with_provider(pool, cfg, &provider)
}

/// Same as [`run_selection`] with an externally supplied provider (injected
/// matrices, pre-resolved kernels). Distance-based strategies still need the
/// pool's distance configuration and ignore the provider during selection.
pub fn run_selection_with_provider(
    pool: &Pool,
    cfg: &SelectionConfig,
    provider: &dyn SimilarityProvider,
) -> Result<SelectionResult> {
    cfg.validate(pool.len())?;
    check_provider(pool, provider)?;
    let distance = distance_with_seed(cfg);
    let result = match cfg.strategy {
        Strategy::NorisSum => noris_sum_select(pool, cfg.budget, provider, cfg.clamp_scores)?,
        Strategy::NorisMax => noris_max_select(pool, cfg.budget, provider, cfg.clamp_scores)?,
        Strategy::Uncertainty => top_b_uncertainty(pool, cfg.budget)?,
        Strategy::Random => random_select(pool, cfg.budget, cfg.seed)?,
        Strategy::KCenter => k_center_greedy(pool, cfg.budget, &distance)?,
        Strategy::Hybrid => hybrid_product(pool, cfg.budget, &distance)?,
    };
    Ok(attach_objectives(pool, result, provider))
}

/// Selection-level seed flows into sampled d_max estimation.
fn distance_with_seed(cfg: &SelectionConfig) -> DistanceConfig {
    let mut distance = cfg.distance;
    if let crate::pool::DmaxEstimation::Sampled { pair_count, .. } = distance.dmax_estimation {
        distance.dmax_estimation = crate::pool::DmaxEstimation::Sampled {
            pair_count,
            seed: cfg.seed,
        };
    }
    distance
}
