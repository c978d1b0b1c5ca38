//! Round-over-round trend analysis for a single feature.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::features::FeatureTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trend {
    pub feature: String,
    /// (round_index, mean feature value) in round order.
    pub per_round: Vec<(u32, f64)>,
    /// OLS slope of the per-round means over round index.
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation between round index and per-round mean
    /// (0 when the means are constant).
    pub correlation: f64,
}

/// Fits a least-squares line through the per-round means of one feature.
/// The table should contain a single subject and scenario; rows are grouped
/// by `round_index` regardless.
pub fn trend_over_rounds(table: &FeatureTable, feature: &str) -> Result<Trend, LearnError> {
    let col = table
        .schema
        .iter()
        .position(|s| s == feature)
        .ok_or_else(|| LearnError::Trend(format!("unknown feature '{feature}'")))?;

    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in &table.rows {
        let e = sums.entry(r.round_index).or_insert((0.0, 0));
        e.0 += r.values[col];
        e.1 += 1;
    }
    if sums.len() < 4 {
        return Err(LearnError::Trend(format!("need at least 4 rounds, have {}", sums.len())));
    }
    let per_round: Vec<(u32, f64)> = sums.into_iter().map(|(round, (s, c))| (round, s / c as f64)).collect();

    // Constant means: slope is exactly zero by definition, not by arithmetic.
    if per_round.windows(2).all(|w| w[0].1 == w[1].1) {
        return Ok(Trend {
            feature: feature.to_string(),
            intercept: per_round[0].1,
            per_round,
            slope: 0.0,
            correlation: 0.0,
        });
    }

    let n = per_round.len() as f64;
    let mx = per_round.iter().map(|(r, _)| *r as f64).sum::<f64>() / n;
    let my = per_round.iter().map(|(_, v)| v).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (r, v) in &per_round {
        let dx = *r as f64 - mx;
        let dy = v - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let correlation = if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 };
    Ok(Trend {
        feature: feature.to_string(),
        per_round,
        slope,
        intercept: my - slope * mx,
        correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureRow, FeatureTable};
    use crate::session::ScenarioTag;

    fn table(round_values: &[(u32, f64)]) -> FeatureTable {
        FeatureTable {
            schema: vec!["rms".into()],
            rows: round_values
                .iter()
                .enumerate()
                .map(|(i, (round, v))| FeatureRow {
                    values: vec![*v],
                    subject_id: "s01".into(),
                    scenario: ScenarioTag::from_id(1).unwrap(),
                    round_index: *round,
                    movement_label: None,
                    window_start_s: i as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_means_give_exact_zero_slope() {
        let t = table(&[(1, 0.3), (2, 0.3), (3, 0.3), (4, 0.3), (5, 0.3)]);
        let trend = trend_over_rounds(&t, "rms").unwrap();
        assert_eq!(trend.slope, 0.0);
        assert_eq!(trend.correlation, 0.0);
    }

    #[test]
    fn linear_drift_recovered_exactly() {
        // mean = 0.1 + 0.02 * round
        let pts: Vec<(u32, f64)> = (1..=10).map(|r| (r, 0.1 + 0.02 * r as f64)).collect();
        let trend = trend_over_rounds(&table(&pts), "rms").unwrap();
        assert!((trend.slope - 0.02).abs() < 1e-12);
        assert!((trend.intercept - 0.1).abs() < 1e-12);
        assert!(trend.correlation > 0.999999);
    }

    #[test]
    fn within_round_rows_are_averaged() {
        let t = table(&[(1, 0.0), (1, 2.0), (2, 1.0), (3, 1.0), (4, 1.0)]);
        let trend = trend_over_rounds(&t, "rms").unwrap();
        assert_eq!(trend.per_round, vec![(1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0)]);
        assert_eq!(trend.slope, 0.0);
    }

    #[test]
    fn noise_without_drift_has_weak_correlation() {
        let pts: Vec<(u32, f64)> = vec![
            (1, 0.31), (2, 0.29), (3, 0.32), (4, 0.28), (5, 0.30),
            (6, 0.31), (7, 0.29), (8, 0.32), (9, 0.28), (10, 0.30),
        ];
        let trend = trend_over_rounds(&table(&pts), "rms").unwrap();
        assert!(trend.correlation.abs() < 0.5, "correlation {}", trend.correlation);
    }

    #[test]
    fn fewer_than_four_rounds_is_an_error() {
        let t = table(&[(1, 0.1), (2, 0.2), (3, 0.3)]);
        assert!(matches!(trend_over_rounds(&t, "rms"), Err(LearnError::Trend(_))));
    }

    #[test]
    fn unknown_feature_is_an_error() {
        let t = table(&[(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4)]);
        assert!(matches!(trend_over_rounds(&t, "nope"), Err(LearnError::Trend(_))));
    }
}
