//! Binary gradient-boosted decision trees with logistic loss and exact
//! (pre-sorted, level-wise) split search.

use serde::{Deserialize, Serialize};

use super::{class_names, LearnError};
use crate::features::{FeatureTable, Task};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// L2 regularization on leaf values.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { n_trees: 100, max_depth: 4, learning_rate: 0.1, min_samples_leaf: 5, lambda: 1.0, seed: 0 }
    }
}

/// Flat tree node; interior nodes route `x[feature] <= threshold` left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub leaf_value: f64,
    pub is_leaf: bool,
    /// Split gain, kept for total-gain feature importance.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf {
                return n.leaf_value;
            }
            i = if x[n.feature] <= n.threshold { n.left } else { n.right };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub task: Task,
    pub hp: Hyperparams,
    pub feature_names: Vec<String>,
    /// Ordered [negative, positive].
    pub classes: [String; 2],
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Training log-loss after each boosting round.
    pub train_log_loss: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GbdtModel {
    /// Probability of the positive class.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut score = self.base_score;
        for t in &self.trees {
            score += self.hp.learning_rate * t.predict(x);
        }
        sigmoid(score)
    }

    /// Predicted class index and its probability.
    pub fn predict(&self, x: &[f64]) -> (usize, f64) {
        let p = self.predict_proba(x);
        if p >= 0.5 {
            (1, p)
        } else {
            (0, 1.0 - p)
        }
    }

    pub fn predict_label(&self, x: &[f64]) -> &str {
        &self.classes[self.predict(x).0]
    }

    /// Window-level accuracy on a feature table.
    pub fn accuracy(&self, table: &FeatureTable, task: Task) -> f64 {
        if table.rows.is_empty() {
            return 0.0;
        }
        let correct = table
            .rows
            .iter()
            .filter(|r| (self.predict(&r.values).0 == 1) == table.label(r, task))
            .count();
        correct as f64 / table.rows.len() as f64
    }

    /// Total-gain importance per feature, normalized to sum to 1, sorted
    /// descending with lexicographic tie-breaking.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut gain = vec![0.0; self.feature_names.len()];
        for t in &self.trees {
            for n in &t.nodes {
                if !n.is_leaf {
                    gain[n.feature] += n.gain;
                }
            }
        }
        let total: f64 = gain.iter().sum();
        let mut out: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .zip(gain)
            .map(|(name, g)| (name.clone(), if total > 0.0 { g / total } else { 0.0 }))
            .collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }

    pub fn from_json(text: &str) -> Result<GbdtModel, LearnError> {
        let model: GbdtModel =
            serde_json::from_str(text).map_err(|e| LearnError::Format(format!("bad model file: {e}")))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Format(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        Ok(model)
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct NodeStats {
    g: f64,
    h: f64,
    n: usize,
}

/// Builds one regression tree on gradients/hessians, level-wise with exact
/// splits over pre-sorted feature orders. Tie-breaking is lowest feature
/// index then lowest threshold, so training is deterministic.
fn build_tree(
    cols: &[Vec<f64>],
    sorted_idx: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    hp: &Hyperparams,
) -> Tree {
    let n_rows = grad.len();
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut node_of: Vec<i32> = vec![0; n_rows];

    let root_stats = NodeStats {
        g: grad.iter().sum(),
        h: hess.iter().sum(),
        n: n_rows,
    };
    nodes.push(TreeNode {
        feature: 0,
        threshold: 0.0,
        left: 0,
        right: 0,
        leaf_value: -root_stats.g / (root_stats.h + hp.lambda),
        is_leaf: true,
        gain: 0.0,
    });
    let mut level_nodes: Vec<usize> = vec![0];
    let mut stats: Vec<NodeStats> = vec![root_stats];

    for _depth in 0..hp.max_depth {
        if level_nodes.is_empty() {
            break;
        }
        let n_active = nodes.len();
        let mut best: Vec<Option<SplitCandidate>> = (0..n_active).map(|_| None).collect();

        // Per active node running left-side accumulators, reset per feature.
        let mut gl = vec![0.0; n_active];
        let mut hl = vec![0.0; n_active];
        let mut cl = vec![0usize; n_active];
        let mut last_val = vec![f64::NAN; n_active];

        for f in 0..cols.len() {
            for &nd in &level_nodes {
                gl[nd] = 0.0;
                hl[nd] = 0.0;
                cl[nd] = 0;
                last_val[nd] = f64::NAN;
            }
            let col = &cols[f];
            for &ri in &sorted_idx[f] {
                let i = ri as usize;
                let nd = node_of[i];
                if nd < 0 {
                    continue;
                }
                let nd = nd as usize;
                if !level_nodes.contains(&nd) {
                    continue;
                }
                let v = col[i];
                let st = &stats[nd];
                if cl[nd] >= hp.min_samples_leaf
                    && st.n - cl[nd] >= hp.min_samples_leaf
                    && v > last_val[nd]
                {
                    let gr = st.g - gl[nd];
                    let hr = st.h - hl[nd];
                    let gain = gl[nd] * gl[nd] / (hl[nd] + hp.lambda) + gr * gr / (hr + hp.lambda)
                        - st.g * st.g / (st.h + hp.lambda);
                    let threshold = 0.5 * (last_val[nd] + v);
                    let better = match &best[nd] {
                        None => gain > 1e-12,
                        Some(b) => gain > b.gain + 1e-12,
                    };
                    if better {
                        best[nd] = Some(SplitCandidate { feature: f, threshold, gain });
                    }
                }
                gl[nd] += grad[i];
                hl[nd] += hess[i];
                cl[nd] += 1;
                last_val[nd] = v;
            }
        }

        let mut next_level = Vec::new();
        let mut child_map: Vec<Option<(usize, usize, usize, f64)>> = vec![None; n_active];
        for &nd in &level_nodes {
            if let Some(split) = &best[nd] {
                let left = nodes.len();
                let right = nodes.len() + 1;
                nodes[nd].is_leaf = false;
                nodes[nd].feature = split.feature;
                nodes[nd].threshold = split.threshold;
                nodes[nd].left = left;
                nodes[nd].right = right;
                nodes[nd].gain = split.gain;
                nodes.push(TreeNode { feature: 0, threshold: 0.0, left: 0, right: 0, leaf_value: 0.0, is_leaf: true, gain: 0.0 });
                nodes.push(TreeNode { feature: 0, threshold: 0.0, left: 0, right: 0, leaf_value: 0.0, is_leaf: true, gain: 0.0 });
                stats.push(NodeStats { g: 0.0, h: 0.0, n: 0 });
                stats.push(NodeStats { g: 0.0, h: 0.0, n: 0 });
                child_map[nd] = Some((split.feature, left, right, split.threshold));
                next_level.push(left);
                next_level.push(right);
            } else {
                // Finalize this leaf; stop routing its samples.
                let value = -stats[nd].g / (stats[nd].h + hp.lambda);
                nodes[nd].leaf_value = value;
            }
        }

        for i in 0..n_rows {
            let nd = node_of[i];
            if nd < 0 {
                continue;
            }
            match child_map.get(nd as usize).and_then(|c| *c) {
                Some((f, left, right, threshold)) => {
                    let child = if cols[f][i] <= threshold { left } else { right };
                    node_of[i] = child as i32;
                    stats[child].g += grad[i];
                    stats[child].h += hess[i];
                    stats[child].n += 1;
                }
                None => node_of[i] = -1,
            }
        }
        level_nodes = next_level;
    }

    // Any children left at max depth become leaves.
    for &nd in &level_nodes {
        nodes[nd].leaf_value = -stats[nd].g / (stats[nd].h + hp.lambda);
        nodes[nd].is_leaf = true;
    }
    Tree { nodes }
}

/// Trains a binary GBDT with logistic loss; deterministic in (table, hp).
pub fn train(table: &FeatureTable, task: Task, hp: &Hyperparams) -> Result<GbdtModel, LearnError> {
    let labels = table.labels(task);
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == n {
        return Err(LearnError::Train("training table contains a single class".into()));
    }
    if n < 2 * hp.min_samples_leaf {
        return Err(LearnError::Train(format!(
            "need at least {} rows, have {n}",
            2 * hp.min_samples_leaf
        )));
    }
    let n_features = table.schema.len();
    if table.rows.iter().any(|r| r.values.iter().any(|v| !v.is_finite())) {
        return Err(LearnError::Train("non-finite feature values".into()));
    }

    // Column-major copy plus one argsort per feature, reused by every tree.
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); n_features];
    for r in &table.rows {
        for (c, v) in r.values.iter().enumerate() {
            cols[c].push(*v);
        }
    }
    let sorted_idx: Vec<Vec<u32>> = cols
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                col[a as usize].partial_cmp(&col[b as usize]).unwrap().then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
    let prior = (n_pos as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (prior / (1.0 - prior)).ln();

    let mut score = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(hp.n_trees);
    let mut train_log_loss = Vec::with_capacity(hp.n_trees);

    for _ in 0..hp.n_trees {
        for i in 0..n {
            let p = sigmoid(score[i]);
            grad[i] = p - y[i];
            hess[i] = (p * (1.0 - p)).max(1e-12);
        }
        let tree = build_tree(&cols, &sorted_idx, &grad, &hess, hp);
        let mut loss = 0.0;
        for (i, r) in table.rows.iter().enumerate() {
            score[i] += hp.learning_rate * tree.predict(&r.values);
            let p = sigmoid(score[i]).clamp(1e-15, 1.0 - 1e-15);
            loss -= y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln();
        }
        train_log_loss.push(loss / n as f64);
        trees.push(tree);
    }

    let classes = class_names(task);
    Ok(GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        task,
        hp: *hp,
        feature_names: table.schema.clone(),
        classes: [classes[0].to_string(), classes[1].to_string()],
        base_score,
        trees,
        train_log_loss,
    })
}

/// Splits a new subject's table into a calibration set (the earliest
/// `fraction` of each scenario-round's windows, in time order) and the
/// remaining evaluation rows. Taking the session head mirrors how calibration
/// data would actually be collected: the recording starts, a slice is kept,
/// and everything after it stays untouched for evaluation.
pub fn adapt_split(new_subject: &FeatureTable, fraction: f64) -> Result<(FeatureTable, FeatureTable), LearnError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(LearnError::Adapt(format!("fraction {fraction} outside [0, 1]")));
    }
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(u8, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in new_subject.rows.iter().enumerate() {
        groups.entry((r.scenario.id(), r.round_index)).or_default().push(i);
    }
    let mut take = vec![false; new_subject.rows.len()];
    for ((scenario, round), mut idxs) in groups {
        idxs.sort_by(|&a, &b| {
            new_subject.rows[a]
                .window_start_s
                .partial_cmp(&new_subject.rows[b].window_start_s)
                .unwrap()
        });
        let k = (fraction * idxs.len() as f64).floor() as usize;
        if fraction > 0.0 && fraction < 1.0 && k == 0 {
            return Err(LearnError::Adapt(format!(
                "scenario {scenario} round {round} has too few windows ({}) to take a {fraction} fraction",
                idxs.len()
            )));
        }
        for &i in idxs.iter().take(k) {
            take[i] = true;
        }
    }
    let mut adapt_rows = Vec::new();
    let mut eval_rows = Vec::new();
    for (i, r) in new_subject.rows.iter().enumerate() {
        if take[i] {
            adapt_rows.push(r.clone());
        } else {
            eval_rows.push(r.clone());
        }
    }
    Ok((
        FeatureTable { schema: new_subject.schema.clone(), rows: adapt_rows },
        FeatureTable { schema: new_subject.schema.clone(), rows: eval_rows },
    ))
}

/// Pooled retraining: base data plus the earliest `fraction` of the new
/// subject's windows. Evaluate only on the rows `adapt_split` leaves out.
pub fn adapt_model(
    base: &GbdtModel,
    base_table: &FeatureTable,
    new_subject: &FeatureTable,
    fraction: f64,
) -> Result<GbdtModel, LearnError> {
    let (adapt_rows, _eval) = adapt_split(new_subject, fraction)?;
    let mut pooled = base_table.clone();
    pooled.rows.extend(adapt_rows.rows);
    train(&pooled, base.task, &base.hp)
}
