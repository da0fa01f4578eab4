//! Random forest of CART trees (Gini impurity, axis-aligned splits).
//!
//! Each tree draws a bootstrap sample and, at every node, considers
//! `features_per_split` randomly chosen columns. Tree `t` takes its
//! randomness from ChaCha stream `t + 1` of the forest seed, so training in
//! parallel gives the same forest as training sequentially.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, FeatureRow};
use crate::choice::Choice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Defaults to `ceil(sqrt(#features))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: 8, min_leaf: 2, features_per_split: None, seed: 0 }
    }
}

impl ForestParams {
    fn mtry(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(Choice),
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    root: Node,
}

type Counts = [usize; 3];

fn gini(c: &Counts, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - c.iter().map(|&k| (k as f64 / n).powi(2)).sum::<f64>()
}

fn plurality(c: &Counts) -> Choice {
    let mut best = 0;
    for i in 1..3 {
        if c[i] > c[best] {
            best = i;
        }
    }
    Choice::from_index(best)
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    n_features: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> Node {
        let mut counts = [0usize; 3];
        for &i in &idx {
            counts[self.y[i]] += 1;
        }
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || n < 2 * self.min_leaf {
            return Node::Leaf(plurality(&counts));
        }
        let parent = gini(&counts, n);

        let mut columns: Vec<usize> = (0..self.n_features).collect();
        columns.shuffle(rng);
        columns.truncate(self.mtry);

        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &f in &columns {
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; 3];
            for p in 0..n - 1 {
                left[sorted[p].1] += 1;
                let n_left = p + 1;
                if sorted[p].0 == sorted[p + 1].0 || n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1], counts[2] - left[2]];
                let impurity =
                    (n_left as f64 * gini(&left, n_left) + (n - n_left) as f64 * gini(&right, n - n_left)) / n as f64;
                if best.is_none_or(|(b, _, _)| impurity < b) {
                    let (lo, hi) = (sorted[p].0, sorted[p + 1].0);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((impurity, f, threshold));
                }
            }
        }

        match best {
            Some((impurity, feature, threshold)) if impurity < parent - 1e-12 => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][feature] <= threshold);
                Node::Split {
                    feature,
                    threshold,
                    left: Box::new(self.build(l, depth + 1, rng)),
                    right: Box::new(self.build(r, depth + 1, rng)),
                }
            }
            _ => Node::Leaf(plurality(&counts)),
        }
    }
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> Choice {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(c) => return *c,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub feature_names: Vec<String>,
    pub trees: Vec<DecisionTree>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

impl ForestModel {
    /// Plurality over trees; ties go to the earlier of Left, Equal, Right.
    pub fn predict_values(&self, x: &[f64]) -> Choice {
        let mut votes = [0usize; 3];
        for t in &self.trees {
            votes[t.predict(x).index()] += 1;
        }
        plurality(&votes)
    }

    pub fn accuracy(&self, rows: &[FeatureRow]) -> Result<f64, AnalysisError> {
        if rows.is_empty() {
            return Err(AnalysisError::TooFewRows { needed: 1, got: 0 });
        }
        let mut correct = 0;
        for r in rows {
            if predict(self, r)? == r.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / rows.len() as f64)
    }
}

struct Matrix {
    names: Vec<String>,
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

fn to_matrix(rows: &[FeatureRow]) -> Result<Matrix, AnalysisError> {
    let first = rows.first().ok_or(AnalysisError::TooFewRows { needed: 1, got: 0 })?;
    let names: Vec<String> = first.features.keys().cloned().collect();
    if names.is_empty() {
        return Err(AnalysisError::InvalidParam("rows have no features"));
    }
    let mut x = Vec::with_capacity(rows.len());
    for r in rows {
        if !r.features.keys().eq(names.iter()) {
            return Err(AnalysisError::FeatureMismatch);
        }
        if r.features.values().any(|v| !v.is_finite()) {
            return Err(AnalysisError::InvalidParam("non-finite feature value"));
        }
        x.push(r.values());
    }
    Ok(Matrix { names, x, y: rows.iter().map(|r| r.label.index()).collect() })
}

fn class_count(y: &[usize]) -> usize {
    let mut seen = [false; 3];
    for &c in y {
        seen[c] = true;
    }
    seen.iter().filter(|&&s| s).count()
}

fn check_params(params: &ForestParams) -> Result<(), AnalysisError> {
    if params.n_trees == 0 {
        return Err(AnalysisError::InvalidParam("n_trees must be >= 1"));
    }
    if params.min_leaf == 0 {
        return Err(AnalysisError::InvalidParam("min_leaf must be >= 1"));
    }
    if params.features_per_split == Some(0) {
        return Err(AnalysisError::InvalidParam("features_per_split must be >= 1"));
    }
    Ok(())
}

fn fit(m: &Matrix, rows: &[usize], params: &ForestParams) -> ForestModel {
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| m.x[i].clone()).collect();
    let y: Vec<usize> = rows.iter().map(|&i| m.y[i]).collect();
    let n = x.len();
    let mtry = params.mtry(m.names.len());
    let builder = TreeBuilder {
        x: &x,
        y: &y,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        mtry,
        n_features: m.names.len(),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64 + 1);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            DecisionTree { root: builder.build(sample, 0, &mut rng) }
        })
        .collect();
    ForestModel {
        feature_names: m.names.clone(),
        trees,
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        features_per_split: mtry,
        seed: params.seed,
    }
}

pub fn train_forest(rows: &[FeatureRow], params: &ForestParams) -> Result<ForestModel, AnalysisError> {
    check_params(params)?;
    let m = to_matrix(rows)?;
    if class_count(&m.y) < 2 {
        return Err(AnalysisError::SingleClass);
    }
    let all: Vec<usize> = (0..m.x.len()).collect();
    Ok(fit(&m, &all, params))
}

pub fn predict(model: &ForestModel, row: &FeatureRow) -> Result<Choice, AnalysisError> {
    if !row.features.keys().eq(model.feature_names.iter()) {
        return Err(AnalysisError::FeatureMismatch);
    }
    Ok(model.predict_values(&row.values()))
}

/// Per-fold accuracies plus the summary a box plot needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl CvResult {
    fn from_folds(k: usize, fold_accuracies: Vec<f64>) -> Self {
        let n = fold_accuracies.len() as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / n;
        let std = (fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut s = fold_accuracies.clone();
        s.sort_by(f64::total_cmp);
        CvResult {
            k,
            mean,
            std,
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
            fold_accuracies,
        }
    }
}

/// k-fold cross validation over a seeded random partition of the rows.
pub fn cross_validate(rows: &[FeatureRow], params: &ForestParams, k: usize) -> Result<CvResult, AnalysisError> {
    check_params(params)?;
    if k < 2 {
        return Err(AnalysisError::InvalidParam("k must be >= 2"));
    }
    if rows.len() < k {
        return Err(AnalysisError::TooFewRows { needed: k, got: rows.len() });
    }
    let m = to_matrix(rows)?;
    if class_count(&m.y) < 2 {
        return Err(AnalysisError::SingleClass);
    }
    let n = rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));

    let accuracies = (0..k)
        .map(|fold| {
            let (start, end) = (fold * n / k, (fold + 1) * n / k);
            let test = &order[start..end];
            let train: Vec<usize> = order[..start].iter().chain(&order[end..]).copied().collect();
            let fold_params = ForestParams { seed: params.seed.wrapping_add(fold as u64 + 1), ..*params };
            let model = fit(&m, &train, &fold_params);
            let correct = test.iter().filter(|&&i| model.predict_values(&m.x[i]).index() == m.y[i]).count();
            correct as f64 / test.len() as f64
        })
        .collect();
    Ok(CvResult::from_folds(k, accuracies))
}
