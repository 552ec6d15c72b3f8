//! Command-line front end for the selection engine.
//!
//! Exit codes are a stable contract for pipeline callers:
//! 0 success, 2 usage or format error, 3 domain error (degenerate pool,
//! combinatorial guard or export cap exceeded).
//!
//! `NORIS_THREADS` caps worker parallelism; 0 or unset picks the default.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use noris::error::Error;
use noris::featgeom::{image_feature_from_map, roi_gap, roi_to_feature_coords};
use noris::io;
use noris::pool::{
    Aggregation, DistanceConfig, DistanceMetric, DistanceMode, DmaxEstimation, ObjectInstance,
    Sample, SelectionConfig, SimilarityConfig, SimilarityKind, Strategy,
};
use noris::selector::{
    self, aggregate_object_uncertainty, brute_force_optimum, least_confidence, run_selection,
    run_selection_with_provider, KernelSimilarity, ObjectiveKind, SimilarityProvider,
    UncertaintyAggregation,
};
use noris::simulator::{run_experiment, SimExperiment};

#[derive(Parser)]
#[command(
    name = "noris",
    version,
    about = "Batch active-learning selection engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a selection strategy over a pool and write a JSON report.
    Select(SelectArgs),
    /// Pool one image's detections from an NFM1 feature map into a pool line.
    RoiExtract(RoiExtractArgs),
    /// Export the pairwise distance table (and d_max) as CSV.
    Distances(DistancesArgs),
    /// Compare a greedy selection against the brute-force subset optimum.
    Oracle(OracleArgs),
    /// Run a synthetic experiment spec and write its metric table.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    NorisSum,
    NorisMax,
    Uncertainty,
    Random,
    KCenter,
    Hybrid,
}

impl From<StrategyArg> for Strategy {
    fn from(arg: StrategyArg) -> Self {
        match arg {
            StrategyArg::NorisSum => Strategy::NorisSum,
            StrategyArg::NorisMax => Strategy::NorisMax,
            StrategyArg::Uncertainty => Strategy::Uncertainty,
            StrategyArg::Random => Strategy::Random,
            StrategyArg::KCenter => Strategy::KCenter,
            StrategyArg::Hybrid => Strategy::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimilarityArg {
    Gaussian,
    Linear,
}

impl From<SimilarityArg> for SimilarityKind {
    fn from(arg: SimilarityArg) -> Self {
        match arg {
            SimilarityArg::Gaussian => SimilarityKind::Gaussian,
            SimilarityArg::Linear => SimilarityKind::Linear,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    SqEuclidean,
    Cosine,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Max,
    Avg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Object,
    Plain,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Sum,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum UncertaintyAggArg {
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug)]
enum DmaxArg {
    Exact,
    Sample(usize),
}

fn parse_dmax(text: &str) -> Result<DmaxArg, String> {
    if text == "exact" {
        return Ok(DmaxArg::Exact);
    }
    if let Some(count) = text.strip_prefix("sample:") {
        let count: usize = count
            .parse()
            .map_err(|_| format!("bad pair count in {text:?}"))?;
        if count == 0 {
            return Err("sampled d_max needs at least one pair".into());
        }
        return Ok(DmaxArg::Sample(count));
    }
    Err(format!("expected \"exact\" or \"sample:K\", got {text:?}"))
}

/// Distance configuration flags shared by the pool-consuming commands.
#[derive(Args)]
struct DistanceFlags {
    /// Distance metric between feature vectors.
    #[arg(long, value_enum, default_value = "sq-euclidean")]
    metric: MetricArg,
    /// Aggregation of object-pair distances into an image-pair distance.
    #[arg(long, value_enum, default_value = "max")]
    agg: AggArg,
    /// Object-feature distances or one plain embedding per sample.
    #[arg(long, value_enum, default_value = "object")]
    mode: ModeArg,
    /// Drop the whole-image feature factor from object-mode distances.
    #[arg(long)]
    no_image_features: bool,
    /// Pool-diameter estimation: "exact" or "sample:K".
    #[arg(long, default_value = "exact", value_parser = parse_dmax)]
    dmax: DmaxArg,
}

impl DistanceFlags {
    fn to_config(&self, seed: u64) -> DistanceConfig {
        DistanceConfig {
            metric: match self.metric {
                MetricArg::SqEuclidean => DistanceMetric::SqEuclidean,
                MetricArg::Cosine => DistanceMetric::Cosine,
            },
            aggregation: match self.agg {
                AggArg::Max => Aggregation::Max,
                AggArg::Avg => Aggregation::Avg,
            },
            use_image_features: !self.no_image_features,
            mode: match self.mode {
                ModeArg::Object => DistanceMode::Object,
                ModeArg::Plain => DistanceMode::Plain,
            },
            dmax_estimation: match self.dmax {
                DmaxArg::Exact => DmaxEstimation::Exact,
                DmaxArg::Sample(pair_count) => DmaxEstimation::Sampled { pair_count, seed },
            },
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    /// Pool file (JSON Lines).
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Number of samples to select.
    #[arg(long)]
    budget: usize,
    /// Similarity kernel family.
    #[arg(long, value_enum, default_value = "gaussian")]
    similarity: SimilarityArg,
    /// Bandwidth fraction of d_max, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    distance: DistanceFlags,
    /// Clamp working scores at zero during selection.
    #[arg(long)]
    clamp: bool,
    /// Seed for the random strategy and sampled d_max.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inject an explicit similarity matrix (JSON array of rows); bypasses
    /// kernel resolution. Test hook.
    #[arg(long, hide = true)]
    sim_matrix: Option<PathBuf>,
    /// Report output path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RoiExtractArgs {
    /// NFM1 feature-map file.
    #[arg(long)]
    feature_map: PathBuf,
    /// Detections file (JSON array of {bbox, score?, class?, class_probs?}).
    #[arg(long)]
    detections: PathBuf,
    /// Sample id for the emitted pool line.
    #[arg(long)]
    id: String,
    /// Explicit information score; otherwise derived from per-detection
    /// class_probs via least confidence.
    #[arg(long)]
    uncertainty: Option<f64>,
    /// How per-object least-confidence scores collapse into one value.
    #[arg(long, value_enum, default_value = "mean")]
    agg_uncertainty: UncertaintyAggArg,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistancesArgs {
    #[arg(long)]
    pool: PathBuf,
    #[command(flatten)]
    distance: DistanceFlags,
    /// Largest pool size the full-matrix export accepts.
    #[arg(long, default_value_t = 5000)]
    cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    budget: usize,
    /// Batch objective to maximize.
    #[arg(long, value_enum, default_value = "sum")]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    similarity: SimilarityArg,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    distance: DistanceFlags,
    #[arg(long)]
    clamp: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    sim_matrix: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Metric table output path (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Optional per-seed JSON dump of the same metrics.
    #[arg(long)]
    per_seed_json: Option<PathBuf>,
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select(args) => cmd_select(args),
        Command::RoiExtract(args) => cmd_roi_extract(args),
        Command::Distances(args) => cmd_distances(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::DegeneratePool(_) | Error::TooLarge(_) => 3,
        _ => 2,
    }
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("NORIS_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                // Ignore failure: the pool may already be initialized in tests.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), Error> {
    match path {
        Some(path) => io::write_atomic(path, content.as_bytes()),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_select(args: SelectArgs) -> Result<(), Error> {
    let pool = io::read_pool_file(&args.pool)?;
    let cfg = SelectionConfig {
        strategy: args.strategy.into(),
        budget: args.budget,
        similarity: SimilarityConfig {
            kind: args.similarity.into(),
            alpha: args.alpha,
        },
        distance: args.distance.to_config(args.seed),
        clamp_scores: args.clamp,
        seed: args.seed,
    };
    let result = match &args.sim_matrix {
        Some(path) => {
            let matrix = io::read_similarity_matrix(path)?;
            run_selection_with_provider(&pool, &cfg, &matrix)?
        }
        None => run_selection(&pool, &cfg)?,
    };
    let report = io::SelectionReport::from_result(&cfg, &result);
    io::write_atomic(&args.out, report.to_json().as_bytes())
}

fn cmd_roi_extract(args: RoiExtractArgs) -> Result<(), Error> {
    let map = io::read_feature_map_file(&args.feature_map)?;
    let detections = io::read_detections(&args.detections)?;

    let image_feature = image_feature_from_map(&map)?;
    let mut objects = Vec::with_capacity(detections.len());
    let mut object_scores = Vec::new();
    for detection in &detections {
        let bbox = detection.bounding_box()?;
        let rect = roi_to_feature_coords(&bbox, &map)?;
        objects.push(ObjectInstance {
            bbox,
            feature: roi_gap(&map, &rect)?,
            detection_score: detection.score,
            class_label: detection.class.clone(),
        });
        if let Some(probs) = &detection.class_probs {
            object_scores.push(least_confidence(probs)?);
        }
    }

    let uncertainty =
        match args.uncertainty {
            Some(value) => value,
            None if !object_scores.is_empty() => {
                let aggregation = match args.agg_uncertainty {
                    UncertaintyAggArg::Mean => UncertaintyAggregation::Mean,
                    UncertaintyAggArg::Max => UncertaintyAggregation::Max,
                };
                aggregate_object_uncertainty(&object_scores, aggregation)?
            }
            None => return Err(Error::invalid_input(
                "no uncertainty source: pass --uncertainty or provide class_probs in detections",
            )),
        };

    let sample = Sample {
        id: args.id,
        uncertainty,
        image_feature,
        objects,
        class_probs: None,
    };
    let mut line = io::sample_to_json_line(&sample);
    line.push('\n');
    write_output(args.out.as_deref(), &line)
}

fn cmd_distances(args: DistancesArgs) -> Result<(), Error> {
    let pool = io::read_pool_file(&args.pool)?;
    if pool.len() < 2 {
        return Err(Error::degenerate(
            "pool has fewer than two samples; no pairs to export",
        ));
    }
    if pool.len() > args.cap {
        return Err(Error::too_large(format!(
            "pool of {} exceeds the full-matrix cap of {}; use sampled d_max for large pools",
            pool.len(),
            args.cap
        )));
    }
    let cfg = args.distance.to_config(0);
    let csv = io::distance_rows_csv(&pool, &cfg)?;
    io::write_atomic(&args.out, csv.as_bytes())
}

fn cmd_oracle(args: OracleArgs) -> Result<(), Error> {
    let pool = io::read_pool_file(&args.pool)?;
    let distance = args.distance.to_config(args.seed);
    let similarity = SimilarityConfig {
        kind: args.similarity.into(),
        alpha: args.alpha,
    };

    let matrix;
    let kernel;
    let provider: &dyn SimilarityProvider = match &args.sim_matrix {
        Some(path) => {
            matrix = io::read_similarity_matrix(path)?;
            &matrix
        }
        None => {
            kernel = KernelSimilarity::from_pool(&pool, &distance, &similarity)?;
            &kernel
        }
    };

    let objective = match args.objective {
        ObjectiveArg::Sum => ObjectiveKind::Sum,
        ObjectiveArg::Max => ObjectiveKind::Max,
    };
    let (best_positions, best_value) =
        brute_force_optimum(&pool, args.budget, provider, objective)?;

    let greedy = match objective {
        ObjectiveKind::Sum => selector::noris_sum_select(&pool, args.budget, provider, args.clamp)?,
        ObjectiveKind::Max => selector::noris_max_select(&pool, args.budget, provider, args.clamp)?,
    };
    let greedy_positions = greedy.selected_positions(&pool);
    let greedy_value = match objective {
        ObjectiveKind::Sum => selector::objective_sum(&pool, &greedy_positions, provider),
        ObjectiveKind::Max => selector::objective_max(&pool, &greedy_positions, provider),
    };

    let to_ids = |positions: &[usize]| -> Vec<String> {
        positions.iter().map(|&p| pool.get(p).id.clone()).collect()
    };
    let report = io::OracleReport {
        objective: match objective {
            ObjectiveKind::Sum => "sum".into(),
            ObjectiveKind::Max => "max".into(),
        },
        budget: args.budget,
        best_subset: to_ids(&best_positions),
        best_value,
        greedy_subset: to_ids(&greedy_positions),
        greedy_value,
        ratio: io::OracleReport::ratio_of(greedy_value, best_value),
    };
    write_output(args.out.as_deref(), &report.to_json())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.spec)?;
    let spec: SimExperiment =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("experiment spec: {e}")))?;
    let reports = run_experiment(&spec)?;
    io::write_atomic(&args.out, io::strategy_reports_csv(&reports).as_bytes())?;

    if let Some(json_path) = &args.per_seed_json {
        let entries: Vec<serde_json::Value> = reports
            .iter()
            .map(|r| {
                serde_json::json!({
                    "seed": r.seed,
                    "strategy": r.strategy.name(),
                    "objective_sum": r.objective_sum,
                    "total_uncertainty": r.total_uncertainty,
                    "coverage_radius": r.coverage_radius,
                    "mean_intra_similarity": r.mean_intra_similarity,
                    "residual_information": r.residual_information,
                    "wall_ms": r.wall_time.as_secs_f64() * 1e3,
                })
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&entries).expect("metrics serialize");
        text.push('\n');
        io::write_atomic(json_path, text.as_bytes())?;
    }
    Ok(())
}
