//! Reference learning stack: gradient-boosted decision trees, cross-validation
//! harnesses, subject adaptation, feature importance, PCA projection, and
//! trend-over-rounds analysis.

mod cv;
mod gbdt;
mod pca;
mod trend;

pub use cv::{cross_validate, CvFold, CvReport, CvStrategy};
pub use gbdt::{adapt_model, adapt_split, train, GbdtModel, Hyperparams, Tree, TreeNode};
pub use pca::{pca_project, PcaProjection};
pub use trend::{trend_over_rounds, Trend};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("train error: {0}")]
    Train(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("adaptation error: {0}")]
    Adapt(String),
    #[error("projection error: {0}")]
    Projection(String),
    #[error("trend error: {0}")]
    Trend(String),
    #[error("model format error: {0}")]
    Format(String),
}

/// Class names for each binary task, ordered [negative, positive].
pub fn class_names(task: crate::features::Task) -> [&'static str; 2] {
    match task {
        crate::features::Task::Suit => ["no_suit", "suit"],
        crate::features::Task::Rollator => ["no_rollator", "rollator"],
        crate::features::Task::Movement => ["forward", "turning"],
    }
}
