//! JSON report payloads written by the selection and oracle commands.

use serde::{Deserialize, Serialize};

use crate::pool::{DistanceConfig, SelectedSample, SelectionConfig, SelectionResult, Strategy};

/// Selection run report. `lambda` and `d_max` are `null` when the run used an
/// injected similarity matrix instead of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub strategy: Strategy,
    pub budget: usize,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub d_max: Option<f64>,
    pub clamp: bool,
    pub distance: DistanceConfig,
    pub selected: Vec<SelectedSample>,
    pub objective_sum: Option<f64>,
    pub objective_max: Option<f64>,
}

impl SelectionReport {
    pub fn from_result(cfg: &SelectionConfig, result: &SelectionResult) -> Self {
        Self {
            strategy: cfg.strategy,
            budget: cfg.budget,
            alpha: cfg.similarity.alpha,
            lambda: result.lambda_used,
            d_max: result.d_max_used,
            clamp: cfg.clamp_scores,
            distance: cfg.distance,
            selected: result.selected.clone(),
            objective_sum: result.objective_sum,
            objective_max: result.objective_max,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("selection reports always serialize");
        text.push('\n');
        text
    }
}

/// Oracle comparison report: exhaustive optimum vs the matching greedy.
/// `ratio` is `greedy_value / best_value`, defined as 1 when both are zero
/// and `null` when only the optimum is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub objective: String,
    pub budget: usize,
    pub best_subset: Vec<String>,
    pub best_value: f64,
    pub greedy_subset: Vec<String>,
    pub greedy_value: f64,
    pub ratio: Option<f64>,
}

impl OracleReport {
    pub fn ratio_of(greedy_value: f64, best_value: f64) -> Option<f64> {
        if best_value == 0.0 {
            if greedy_value == 0.0 {
                Some(1.0)
            } else {
                None
            }
        } else {
            Some(greedy_value / best_value)
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("oracle reports always serialize");
        text.push('\n');
        text
    }
}
