//! Batch active-learning selection engine.
//!
//! Given an unlabeled pool of samples carrying uncertainty scores and feature
//! embeddings (whole-image and per-object), the engine selects a labeling
//! batch that maximizes a collective information score: each candidate's
//! value is discounted by its similarity to already-selected, highly
//! informative samples, so redundant near-duplicates stop crowding out
//! diverse picks.
//!
//! The crate is organized around the selection pipeline:
//!
//! - [`pool`] — the data model: samples, pools, configuration, results.
//! - [`featgeom`] — ROI pooling from feature maps and all pairwise distances,
//!   including the pool diameter used for kernel bandwidth resolution.
//! - [`simcore`] — similarity kernels, bandwidth resolution, the score-update
//!   rule, and the pairwise loss bound these rules are motivated by.
//! - [`selector`] — the greedy sum/max selection variants, their batch
//!   objectives, baselines (top-B uncertainty, random, k-center, hybrid), and
//!   a brute-force subset oracle.
//! - [`simulator`] — seeded synthetic pools and a strategy comparison
//!   harness.
//! - [`io`] — file formats: JSON Lines pools, NFM1 feature maps, reports,
//!   CSV tables.

pub mod error;
pub mod featgeom;
pub mod io;
pub mod pool;
pub mod rng;
pub mod selector;
pub mod simcore;
pub mod simulator;

pub use error::{Error, Result};
pub use pool::{
    Aggregation, BoundingBox, DistanceConfig, DistanceMetric, DistanceMode, DmaxEstimation,
    FeatureVector, ObjectInstance, Pool, Sample, SelectedSample, SelectionConfig, SelectionResult,
    SelectionStats, SimilarityConfig, SimilarityKind, Strategy, Violation,
};
pub use selector::{
    run_selection, run_selection_with_provider, KernelSimilarity, MatrixSimilarity, ObjectiveKind,
    SimilarityProvider,
};
pub use simcore::Kernel;
