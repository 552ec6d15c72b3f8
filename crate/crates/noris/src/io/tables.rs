//! CSV emitters for the pairwise-distance export and simulator metric table.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so tables
//! are deterministic byte-for-byte given the same inputs.

use crate::error::Result;
use crate::featgeom::pair_distance;
use crate::pool::{DistanceConfig, Pool};
use crate::simulator::StrategyReport;

/// Full symmetric distance table, one row per unordered pair (`a` before `b`
/// in pool order), with the pool diameter appended as a trailing comment row.
pub fn distance_rows_csv(pool: &Pool, cfg: &DistanceConfig) -> Result<String> {
    let n = pool.len();
    let mut out = String::from("id_a,id_b,distance\n");
    let mut d_max = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let d = pair_distance(pool.get(a), pool.get(b), cfg)?;
            d_max = d_max.max(d);
            out.push_str(&format!("{},{},{}\n", pool.get(a).id, pool.get(b).id, d));
        }
    }
    out.push_str(&format!("#d_max,{d_max}\n"));
    Ok(out)
}

/// Simulator metric table. The wall-clock column is the only
/// non-reproducible field; diff-based comparisons should drop it.
pub fn strategy_reports_csv(reports: &[StrategyReport]) -> String {
    let mut out = String::from(
        "seed,strategy,objective_sum,total_uncertainty,coverage_radius,mean_intra_similarity,residual_information,wall_ms\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            r.seed,
            r.strategy,
            r.objective_sum,
            r.total_uncertainty,
            r.coverage_radius,
            r.mean_intra_similarity,
            r.residual_information,
            r.wall_time.as_secs_f64() * 1e3,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{Sample, Strategy};
    use std::time::Duration;

    #[test]
    fn distance_csv_hand_values() {
        let pool = Pool::new(vec![
            Sample::plain("a", 0.1, vec![0.0]).unwrap(),
            Sample::plain("b", 0.1, vec![1.0]).unwrap(),
            Sample::plain("c", 0.1, vec![5.0]).unwrap(),
        ])
        .unwrap();
        let csv = distance_rows_csv(&pool, &DistanceConfig::plain_default()).unwrap();
        let expected = "id_a,id_b,distance\n\
                        a,b,1\n\
                        a,c,5\n\
                        b,c,4\n\
                        #d_max,5\n";
        assert_eq!(csv, expected);
    }

    #[test]
    fn report_csv_layout() {
        let reports = vec![StrategyReport {
            seed: 3,
            strategy: Strategy::KCenter,
            objective_sum: 1.5,
            total_uncertainty: 2.25,
            coverage_radius: 0.5,
            mean_intra_similarity: 0.125,
            residual_information: 9.0,
            wall_time: Duration::from_millis(12),
        }];
        let csv = strategy_reports_csv(&reports);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "seed,strategy,objective_sum,total_uncertainty,coverage_radius,mean_intra_similarity,residual_information,wall_ms"
        );
        assert_eq!(
            lines.next().unwrap(),
            "3,k-center,1.5,2.25,0.5,0.125,9,12.000"
        );
    }
}
