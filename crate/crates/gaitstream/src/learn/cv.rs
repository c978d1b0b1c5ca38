//! Cross-validation over feature tables: leave-one-subject-out and
//! within-subject leave-two-rounds-out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbdt::{train, Hyperparams};
use super::LearnError;
use crate::features::{FeatureTable, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvStrategy {
    Loso,
    LeaveTwoRoundsOut,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvFold {
    /// Held-out subject for LOSO; subject under evaluation otherwise.
    pub subject_id: String,
    /// Held-out round indices (empty for LOSO).
    pub held_out_rounds: Vec<u32>,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub task: Task,
    pub strategy: CvStrategy,
    pub folds: Vec<CvFold>,
    /// Test-size-weighted mean accuracy over folds.
    pub mean_accuracy: f64,
}

fn weighted_mean(folds: &[CvFold]) -> f64 {
    let total: usize = folds.iter().map(|f| f.n_test).sum();
    if total == 0 {
        return 0.0;
    }
    folds.iter().map(|f| f.accuracy * f.n_test as f64).sum::<f64>() / total as f64
}

fn run_fold(
    table: &FeatureTable,
    task: Task,
    hp: &Hyperparams,
    subject_id: &str,
    held_out_rounds: Vec<u32>,
) -> Result<CvFold, LearnError> {
    let (train_table, test_table) = if held_out_rounds.is_empty() {
        (
            table.filtered(|r| r.subject_id != subject_id),
            table.filtered(|r| r.subject_id == subject_id),
        )
    } else {
        (
            table.filtered(|r| r.subject_id == subject_id && !held_out_rounds.contains(&r.round_index)),
            table.filtered(|r| r.subject_id == subject_id && held_out_rounds.contains(&r.round_index)),
        )
    };
    if test_table.rows.is_empty() {
        return Err(LearnError::Partition(format!("empty test fold for subject {subject_id}")));
    }
    let model = train(&train_table, task, hp)?;
    Ok(CvFold {
        subject_id: subject_id.to_string(),
        held_out_rounds,
        n_train: train_table.rows.len(),
        n_test: test_table.rows.len(),
        accuracy: model.accuracy(&test_table, task),
    })
}

/// Runs cross-validation; folds train in parallel but the report order and
/// contents are deterministic.
pub fn cross_validate(
    table: &FeatureTable,
    task: Task,
    strategy: CvStrategy,
    hp: &Hyperparams,
) -> Result<CvReport, LearnError> {
    let subjects = table.subject_ids();
    if subjects.is_empty() {
        return Err(LearnError::Partition("empty feature table".into()));
    }

    let specs: Vec<(String, Vec<u32>)> = match strategy {
        CvStrategy::Loso => {
            if subjects.len() < 2 {
                return Err(LearnError::Partition("leave-one-subject-out needs at least 2 subjects".into()));
            }
            subjects.into_iter().map(|s| (s, Vec::new())).collect()
        }
        CvStrategy::LeaveTwoRoundsOut => {
            let mut specs = Vec::new();
            for s in subjects {
                let mut rounds: Vec<u32> = table
                    .rows
                    .iter()
                    .filter(|r| r.subject_id == s)
                    .map(|r| r.round_index)
                    .collect();
                rounds.sort_unstable();
                rounds.dedup();
                if rounds.len() < 4 {
                    return Err(LearnError::Partition(format!(
                        "subject {s} has only {} rounds; need at least 4",
                        rounds.len()
                    )));
                }
                for pair in rounds.chunks_exact(2) {
                    specs.push((s.clone(), pair.to_vec()));
                }
            }
            specs
        }
    };

    let folds: Result<Vec<CvFold>, LearnError> = specs
        .par_iter()
        .map(|(subject, rounds)| run_fold(table, task, hp, subject, rounds.clone()))
        .collect();
    let folds = folds?;
    let mean_accuracy = weighted_mean(&folds);
    Ok(CvReport { task, strategy, folds, mean_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureRow, FeatureTable};
    use crate::session::ScenarioTag;

    fn toy_table(subjects: usize, rounds: u32, offset_per_subject: f64) -> FeatureTable {
        let mut rows = Vec::new();
        for s in 0..subjects {
            for round in 1..=rounds {
                for i in 0..20 {
                    let label = i % 2 == 0;
                    let base = if label { 3.0 } else { -3.0 };
                    rows.push(FeatureRow {
                        values: vec![base + s as f64 * offset_per_subject + 0.01 * i as f64],
                        subject_id: format!("s{s:02}"),
                        scenario: ScenarioTag::from_id(if label { 2 } else { 1 }).unwrap(),
                        round_index: round,
                        movement_label: None,
                        window_start_s: i as f64,
                    });
                }
            }
        }
        FeatureTable { schema: vec!["f0".into()], rows }
    }

    #[test]
    fn loso_has_one_fold_per_subject() {
        let t = toy_table(4, 4, 0.0);
        let hp = Hyperparams { n_trees: 10, ..Default::default() };
        let rep = cross_validate(&t, Task::Suit, CvStrategy::Loso, &hp).unwrap();
        assert_eq!(rep.folds.len(), 4);
        let subjects: Vec<&str> = rep.folds.iter().map(|f| f.subject_id.as_str()).collect();
        assert_eq!(subjects, ["s00", "s01", "s02", "s03"]);
        assert!(rep.folds.iter().all(|f| f.held_out_rounds.is_empty()));
        // Homogeneous subjects: transfer is easy.
        assert!(rep.mean_accuracy > 0.95, "accuracy {}", rep.mean_accuracy);
    }

    #[test]
    fn leave_two_rounds_out_pairs_consecutive_rounds() {
        let t = toy_table(2, 10, 0.0);
        let hp = Hyperparams { n_trees: 10, ..Default::default() };
        let rep = cross_validate(&t, Task::Suit, CvStrategy::LeaveTwoRoundsOut, &hp).unwrap();
        assert_eq!(rep.folds.len(), 10); // 5 folds per subject
        assert_eq!(rep.folds[0].held_out_rounds, vec![1, 2]);
        assert_eq!(rep.folds[4].held_out_rounds, vec![9, 10]);
        for f in &rep.folds {
            assert_eq!(f.n_test, 40);
            assert_eq!(f.n_train, 160);
        }
    }

    #[test]
    fn subject_shift_hurts_loso_but_not_intra() {
        // Per-subject offset larger than the class gap destroys transfer.
        let t = toy_table(4, 4, 50.0);
        let hp = Hyperparams { n_trees: 20, ..Default::default() };
        let loso = cross_validate(&t, Task::Suit, CvStrategy::Loso, &hp).unwrap();
        let intra = cross_validate(&t, Task::Suit, CvStrategy::LeaveTwoRoundsOut, &hp).unwrap();
        assert!(intra.mean_accuracy > loso.mean_accuracy);
        assert!(intra.mean_accuracy > 0.95);
    }

    #[test]
    fn loso_needs_two_subjects() {
        let t = toy_table(1, 4, 0.0);
        let hp = Hyperparams::default();
        assert!(matches!(
            cross_validate(&t, Task::Suit, CvStrategy::Loso, &hp),
            Err(LearnError::Partition(_))
        ));
    }

    #[test]
    fn too_few_rounds_is_partition_error() {
        let t = toy_table(2, 2, 0.0);
        let hp = Hyperparams::default();
        assert!(matches!(
            cross_validate(&t, Task::Suit, CvStrategy::LeaveTwoRoundsOut, &hp),
            Err(LearnError::Partition(_))
        ));
    }

    #[test]
    fn weighted_mean_matches_manual() {
        let folds = vec![
            CvFold { subject_id: "a".into(), held_out_rounds: vec![], n_train: 0, n_test: 10, accuracy: 1.0 },
            CvFold { subject_id: "b".into(), held_out_rounds: vec![], n_train: 0, n_test: 30, accuracy: 0.5 },
        ];
        assert!((weighted_mean(&folds) - 0.625).abs() < 1e-12);
    }
}
