//! Gradient-boosted regression trees fit to pairwise lambda gradients.
//!
//! Each boosting round computes, for every within-query pair with different
//! grades, the logistic pairwise gradient scaled by the |ΔNDCG@k| of swapping
//! the two documents in the current ranking. A least-squares regression tree
//! is grown leaf-wise on those gradients (exact split search) and its leaves
//! take Newton values.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::GradedDataset;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::scalar::Scalar;

use super::Ranker;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum TreeNode<T: Scalar> {
    /// `x[feature] < threshold` goes left.
    Split { feature: usize, threshold: T, left: usize, right: usize },
    Leaf { value: T },
}

/// Binary tree stored as a node arena, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RegressionTree<T: Scalar> {
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    pub fn leaf(value: T) -> Self {
        Self { nodes: vec![TreeNode::Leaf { value }] }
    }

    /// A depth-one tree: `x[feature] < threshold ? left : right`.
    pub fn stump(feature: usize, threshold: T, left: T, right: T) -> Self {
        Self {
            nodes: vec![
                TreeNode::Split { feature, threshold, left: 1, right: 2 },
                TreeNode::Leaf { value: left },
                TreeNode::Leaf { value: right },
            ],
        }
    }

    /// Index of the leaf node that `x` falls into.
    pub fn leaf_index(&self, x: &[T]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] < *threshold { *left } else { *right };
                }
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict(&self, x: &[T]) -> T {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}

/// Additive tree ensemble; score = `learning_rate · Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TreeEnsembleRanker<T: Scalar> {
    pub dim: usize,
    pub trees: Vec<RegressionTree<T>>,
    pub num_leaves: usize,
    pub learning_rate: T,
}

impl<T: Scalar> TreeEnsembleRanker<T> {
    pub fn new(dim: usize, trees: Vec<RegressionTree<T>>, num_leaves: usize, learning_rate: T) -> Result<Self> {
        if !(learning_rate > T::zero()) {
            return Err(invalid("learning rate must be positive"));
        }
        for t in &trees {
            if t.num_leaves() > num_leaves {
                return Err(invalid(format!("tree has {} leaves, limit {num_leaves}", t.num_leaves())));
            }
            if t.max_feature().is_some_and(|f| f >= dim) {
                return Err(invalid("tree splits on a feature beyond the ranker dimension"));
            }
        }
        Ok(Self { dim, trees, num_leaves, learning_rate })
    }
}

impl<T: Scalar> Ranker<T> for TreeEnsembleRanker<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_slice(&self, x: &[T]) -> T {
        self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<T>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMartConfig {
    pub num_leaves: usize,
    pub num_trees: usize,
    pub learning_rate: f64,
    /// Cutoff of the NDCG whose swap deltas weight the pairwise gradients.
    pub ndcg_k: usize,
    pub min_leaf_size: usize,
    /// Fraction of queries sampled for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl LambdaMartConfig {
    pub fn with_shape(num_leaves: usize, num_trees: usize) -> Self {
        Self { num_leaves, num_trees, ..Self::default() }
    }
}

impl Default for LambdaMartConfig {
    fn default() -> Self {
        Self { num_leaves: 10, num_trees: 100, learning_rate: 0.1, ndcg_k: 20, min_leaf_size: 1, subsample: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct LambdaMartFit<T: Scalar> {
    pub ranker: TreeEnsembleRanker<T>,
    /// Pairwise logistic training loss after each boosting round.
    pub loss_history: Vec<f64>,
}

/// Trains the ensemble; see [`fit_lambdamart_lite`].
pub fn train_lambdamart_lite<T: Scalar>(
    dataset: &GradedDataset<T>,
    cfg: &LambdaMartConfig,
) -> Result<TreeEnsembleRanker<T>> {
    Ok(fit_lambdamart_lite(dataset, cfg)?.ranker)
}

/// Mean over graded pairs of `ln(1 + exp(-(s_hi − s_lo)))`.
pub fn pairwise_logistic_loss<T: Scalar, R: Ranker<T> + ?Sized>(ranker: &R, dataset: &GradedDataset<T>) -> f64 {
    let scores: Vec<f64> = dataset.docs.iter().map(|d| ranker.score_slice(d.features.as_slice()).as_f64()).collect();
    let grades: Vec<u8> = dataset.docs.iter().map(|d| d.grade).collect();
    logistic_loss(&scores, &grades, &dataset.query_groups())
}

fn logistic_loss(scores: &[f64], grades: &[u8], groups: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for g in groups {
        for &i in g {
            for &j in g {
                if grades[i] > grades[j] {
                    total += softplus(-(scores[i] - scores[j]));
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn fit_lambdamart_lite<T: Scalar>(dataset: &GradedDataset<T>, cfg: &LambdaMartConfig) -> Result<LambdaMartFit<T>> {
    if cfg.num_trees == 0 {
        return Err(invalid("num_trees must be at least 1"));
    }
    if cfg.num_leaves < 2 {
        return Err(invalid("num_leaves must be at least 2"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(invalid("learning_rate must be positive"));
    }
    if !(cfg.subsample > 0.0 && cfg.subsample <= 1.0) {
        return Err(invalid("subsample must lie in (0, 1]"));
    }
    let m = dataset.dim().ok_or(Error::Empty("training dataset"))?;
    let groups = dataset.query_groups();
    let grades: Vec<u8> = dataset.docs.iter().map(|d| d.grade).collect();
    let useful: Vec<usize> = (0..groups.len())
        .filter(|&q| {
            let g = &groups[q];
            g.iter().any(|&i| grades[i] != grades[g[0]])
        })
        .collect();
    if useful.is_empty() {
        return Err(Error::Training("no query has two distinct grades; nothing to learn".into()));
    }

    let features: Vec<&[T]> = dataset.docs.iter().map(|d| d.features.as_slice()).collect();
    let k = cfg.ndcg_k.max(1);
    let ideal: Vec<f64> = groups.iter().map(|g| ideal_dcg(g, &grades, k)).collect();
    let lr = cfg.learning_rate;
    let n = dataset.len();
    let mut scores = vec![0.0f64; n];
    let mut rng = rng::seeded(cfg.seed);
    let mut trees = Vec::with_capacity(cfg.num_trees);
    let mut history = Vec::with_capacity(cfg.num_trees);
    let min_leaf = cfg.min_leaf_size.max(1);

    for _ in 0..cfg.num_trees {
        let chosen: Vec<usize> = if cfg.subsample < 1.0 {
            let take = ((useful.len() as f64 * cfg.subsample).ceil() as usize).clamp(1, useful.len());
            let mut idx = sample(&mut rng, useful.len(), take).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| useful[i]).collect()
        } else {
            useful.clone()
        };

        let mut lambdas = vec![0.0f64; n];
        let mut pos = vec![0usize; n];
        let mut hess = vec![0.0f64; n];
        let mut rows = Vec::new();
        for &q in &chosen {
            let g = &groups[q];
            if ideal[q] <= 0.0 {
                continue;
            }
            // current rank position of every doc in the query
            let mut order: Vec<usize> = g.clone();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            for (p, &i) in order.iter().enumerate() {
                pos[i] = p;
            }
            for &i in g {
                for &j in g {
                    if grades[i] <= grades[j] {
                        continue;
                    }
                    let delta = (gain(grades[i]) - gain(grades[j])) * (discount(pos[i], k) - discount(pos[j], k));
                    let delta = delta.abs() / ideal[q];
                    if delta == 0.0 {
                        continue;
                    }
                    let rho = sigmoid(-(scores[i] - scores[j]));
                    lambdas[i] += rho * delta;
                    lambdas[j] -= rho * delta;
                    let h = rho * (1.0 - rho) * delta;
                    hess[i] += h;
                    hess[j] += h;
                }
            }
            rows.extend_from_slice(g);
        }

        let tree = grow_tree(&features, &rows, &lambdas, &hess, m, cfg.num_leaves, min_leaf);
        for (i, s) in scores.iter_mut().enumerate() {
            *s += lr * tree.predict(features[i]).as_f64();
        }
        trees.push(tree);
        history.push(logistic_loss(&scores, &grades, &groups));
    }

    let ranker = TreeEnsembleRanker::new(m, trees, cfg.num_leaves, T::lit(lr))?;
    Ok(LambdaMartFit { ranker, loss_history: history })
}

fn gain(grade: u8) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(pos: usize, k: usize) -> f64 {
    if pos < k {
        1.0 / ((pos + 2) as f64).log2()
    } else {
        0.0
    }
}

fn ideal_dcg(group: &[usize], grades: &[u8], k: usize) -> f64 {
    let mut g: Vec<u8> = group.iter().map(|&i| grades[i]).collect();
    g.sort_unstable_by(|a, b| b.cmp(a));
    g.iter().enumerate().map(|(p, &x)| gain(x) * discount(p, k)).sum()
}

struct LeafCandidate {
    node: usize,
    rows: Vec<usize>,
    split: Option<SplitChoice>,
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Leaf-wise growth: repeatedly splits the leaf with the largest
/// squared-error reduction until `max_leaves` is reached or no split helps.
fn grow_tree<T: Scalar>(
    x: &[&[T]],
    rows: &[usize],
    target: &[f64],
    hess: &[f64],
    m: usize,
    max_leaves: usize,
    min_leaf: usize,
) -> RegressionTree<T> {
    let mut nodes: Vec<TreeNode<T>> = vec![TreeNode::Leaf { value: T::zero() }];
    let root_split = best_split(x, rows, target, m, min_leaf);
    let mut leaves = vec![LeafCandidate { node: 0, rows: rows.to_vec(), split: root_split }];

    while leaves.len() < max_leaves {
        let Some(best) = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.split.as_ref().map(|s| (i, s.gain)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
        else {
            break;
        };
        let leaf = leaves.swap_remove(best);
        let split = leaf.split.expect("filtered on split");
        let threshold = T::lit(split.threshold);
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            leaf.rows.iter().partition(|&&r| x[r][split.feature] < threshold);
        let left = nodes.len();
        nodes.push(TreeNode::Leaf { value: T::zero() });
        nodes.push(TreeNode::Leaf { value: T::zero() });
        nodes[leaf.node] = TreeNode::Split { feature: split.feature, threshold, left, right: left + 1 };
        let l_split = best_split(x, &l_rows, target, m, min_leaf);
        let r_split = best_split(x, &r_rows, target, m, min_leaf);
        leaves.push(LeafCandidate { node: left, rows: l_rows, split: l_split });
        leaves.push(LeafCandidate { node: left + 1, rows: r_rows, split: r_split });
    }

    for leaf in &leaves {
        let g: f64 = leaf.rows.iter().map(|&r| target[r]).sum();
        let h: f64 = leaf.rows.iter().map(|&r| hess[r]).sum();
        let value = if h > 1e-12 { g / h } else { 0.0 };
        nodes[leaf.node] = TreeNode::Leaf { value: T::lit(value) };
    }
    RegressionTree { nodes }
}

fn best_split<T: Scalar>(x: &[&[T]], rows: &[usize], target: &[f64], m: usize, min_leaf: usize) -> Option<SplitChoice> {
    if rows.len() < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&r| target[r]).sum();
    let n = rows.len() as f64;
    let base = total * total / n;
    let mut best: Option<SplitChoice> = None;
    let mut sorted = rows.to_vec();
    for f in 0..m {
        sorted.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for i in 0..sorted.len() - 1 {
            left_sum += target[sorted[i]];
            let nl = i + 1;
            let nr = sorted.len() - nl;
            let (lo, hi) = (x[sorted[i]][f], x[sorted[i + 1]][f]);
            if nl < min_leaf || nr < min_leaf || !(lo < hi) {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
            if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                let (lo, hi) = (lo.as_f64(), hi.as_f64());
                let mut threshold = lo + (hi - lo) / 2.0;
                // the midpoint must separate lo and hi after conversion to T
                if !(T::lit(threshold) > x[sorted[i]][f] && T::lit(threshold) <= x[sorted[i + 1]][f]) {
                    threshold = hi;
                }
                best = Some(SplitChoice { gain, feature: f, threshold });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GradedDoc;
    use crate::domain::FeatureVector;

    fn dataset(rows: &[(&str, u8, &[f64])]) -> GradedDataset<f64> {
        GradedDataset::new(
            rows.iter()
                .enumerate()
                .map(|(i, (q, g, f))| GradedDoc {
                    query_id: q.to_string(),
                    doc_id: format!("d{i}"),
                    grade: *g,
                    features: FeatureVector::from_f64(f),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn stump_scoring_example() {
        let r = TreeEnsembleRanker::<f64>::new(1, vec![RegressionTree::stump(0, 0.5, 1.0, 2.0)], 2, 0.1).unwrap();
        let s = r.score(&FeatureVector::from_f64(&[0.7])).unwrap();
        assert!((s - 0.2).abs() < 1e-15);
        assert!((r.score(&FeatureVector::from_f64(&[0.2])).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shape_limits_respected() {
        let ds = dataset(&[
            ("a", 3, &[0.9, 0.1]),
            ("a", 2, &[0.7, 0.5]),
            ("a", 1, &[0.4, 0.2]),
            ("a", 0, &[0.1, 0.9]),
            ("b", 2, &[0.8, 0.3]),
            ("b", 0, &[0.2, 0.4]),
            ("b", 1, &[0.5, 0.6]),
        ]);
        let r = train_lambdamart_lite(&ds, &LambdaMartConfig::with_shape(3, 7)).unwrap();
        assert_eq!(r.trees.len(), 7);
        assert!(r.trees.iter().all(|t| t.num_leaves() <= 3));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let flat = dataset(&[("a", 1, &[0.1]), ("a", 1, &[0.2])]);
        assert!(train_lambdamart_lite(&flat, &LambdaMartConfig::default()).is_err());
        let ok = dataset(&[("a", 1, &[0.1]), ("a", 0, &[0.2])]);
        assert!(train_lambdamart_lite(&ok, &LambdaMartConfig::with_shape(2, 0)).is_err());
        assert!(train_lambdamart_lite(&ok, &LambdaMartConfig::with_shape(1, 5)).is_err());
    }

    #[test]
    fn every_probe_lands_in_one_leaf() {
        let ds = dataset(&[("a", 2, &[0.9]), ("a", 1, &[0.5]), ("a", 0, &[0.1])]);
        let r = train_lambdamart_lite(&ds, &LambdaMartConfig::with_shape(3, 4)).unwrap();
        for t in &r.trees {
            for x in [0.0, 0.3, 0.5, 0.95, 2.0] {
                assert!(matches!(t.nodes[t.leaf_index(&[x])], TreeNode::Leaf { .. }));
            }
        }
    }
}
