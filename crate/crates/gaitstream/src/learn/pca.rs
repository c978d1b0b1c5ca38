//! PCA projection for 2-D visualization of feature tables.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::features::FeatureTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaProjection {
    /// One (pc1, pc2) pair per input row, in row order.
    pub points: Vec<[f64; 2]>,
    /// Fraction of total variance captured by each of the two components.
    pub explained_variance_ratio: [f64; 2],
    pub mean: Vec<f64>,
    /// Column-standardization scales (population std, 1.0 where degenerate).
    pub scale: Vec<f64>,
    pub components: [Vec<f64>; 2],
}

/// Projects standardized feature rows onto the top two principal components.
/// Component signs are fixed so the largest-magnitude loading is positive.
pub fn pca_project(table: &FeatureTable) -> Result<PcaProjection, LearnError> {
    let n = table.rows.len();
    let d = table.schema.len();
    if n < 3 || d < 2 {
        return Err(LearnError::Projection(format!("need at least 3 rows and 2 features, have {n}x{d}")));
    }
    if table.rows.iter().any(|r| r.values.iter().any(|v| !v.is_finite())) {
        return Err(LearnError::Projection("non-finite feature values".into()));
    }

    let mut mean = vec![0.0; d];
    for r in &table.rows {
        for (j, v) in r.values.iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for r in &table.rows {
        for (j, v) in r.values.iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    let scale: Vec<f64> = var.iter().map(|s| (s / n as f64).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();

    let x = DMatrix::from_fn(n, d, |i, j| (table.rows[i].values[j] - mean[j]) / scale[j]);
    let cov = &x.transpose() * &x / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();

    // Order eigenpairs by descending eigenvalue, deterministic on ties.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut components = [vec![0.0; d], vec![0.0; d]];
    let mut ratio = [0.0; 2];
    for k in 0..2 {
        let col = eig.eigenvectors.column(order[k]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap().then(b.0.cmp(&a.0)))
            .map(|(_, &x)| x)
            .unwrap_or(1.0);
        if lead < 0.0 {
            for e in &mut v {
                *e = -*e;
            }
        }
        ratio[k] = if total > 0.0 { eig.eigenvalues[order[k]].max(0.0) / total } else { 0.0 };
        components[k] = v;
    }

    let points: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let row = x.row(i);
            let p1: f64 = row.iter().zip(&components[0]).map(|(a, b)| a * b).sum();
            let p2: f64 = row.iter().zip(&components[1]).map(|(a, b)| a * b).sum();
            [p1, p2]
        })
        .collect();

    Ok(PcaProjection { points, explained_variance_ratio: ratio, mean, scale, components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureRow, FeatureTable};
    use crate::session::ScenarioTag;

    fn table(values: Vec<Vec<f64>>, names: &[&str]) -> FeatureTable {
        FeatureTable {
            schema: names.iter().map(|s| s.to_string()).collect(),
            rows: values
                .into_iter()
                .enumerate()
                .map(|(i, v)| FeatureRow {
                    values: v,
                    subject_id: "s".into(),
                    scenario: ScenarioTag::from_id(1).unwrap(),
                    round_index: 1,
                    movement_label: None,
                    window_start_s: i as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn collinear_data_puts_all_variance_on_pc1() {
        // Points on a line plus a tiny independent wiggle in a third feature.
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64;
                vec![t, 2.0 * t + 1.0, if i % 2 == 0 { 1e-9 } else { -1e-9 }]
            })
            .collect();
        let p = pca_project(&table(rows, &["a", "b", "c"])).unwrap();
        assert!(p.explained_variance_ratio[0] > 0.66);
        assert!(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);
    }

    #[test]
    fn projection_is_centered() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i) as f64 * 0.01, (i % 5) as f64]).collect();
        let p = pca_project(&table(rows, &["a", "b", "c"])).unwrap();
        let m1: f64 = p.points.iter().map(|q| q[0]).sum::<f64>() / 40.0;
        let m2: f64 = p.points.iter().map(|q| q[1]).sum::<f64>() / 40.0;
        assert!(m1.abs() < 1e-9 && m2.abs() < 1e-9);
    }

    #[test]
    fn separated_clusters_stay_separated() {
        let mut rows = Vec::new();
        for i in 0..20 {
            rows.push(vec![10.0 + 0.1 * i as f64, 10.0, 0.3 * i as f64]);
            rows.push(vec![-10.0 - 0.1 * i as f64, -10.0, 0.3 * i as f64]);
        }
        let p = pca_project(&table(rows, &["a", "b", "c"])).unwrap();
        // Even rows are cluster A, odd rows cluster B; PC1 must separate them.
        let a: Vec<f64> = p.points.iter().step_by(2).map(|q| q[0]).collect();
        let b: Vec<f64> = p.points.iter().skip(1).step_by(2).map(|q| q[0]).collect();
        let amin = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let amax = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bmin = b.iter().cloned().fold(f64::INFINITY, f64::min);
        let bmax = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(amin > bmax || bmin > amax);
    }

    #[test]
    fn degenerate_input_is_an_error() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!(matches!(pca_project(&table(rows, &["a", "b"])), Err(LearnError::Projection(_))));
    }

    #[test]
    fn constant_column_does_not_blow_up() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 7.0]).collect();
        let p = pca_project(&table(rows, &["a", "b"])).unwrap();
        assert!(p.points.iter().all(|q| q.iter().all(|v| v.is_finite())));
        assert_eq!(p.scale[1], 1.0);
    }
}
