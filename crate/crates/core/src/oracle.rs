//! Plaintext reference: the same bucketing, scores, tie-breaks and leaf-bit
//! convention as the secure path, in `f64`.

use serde::{Deserialize, Serialize};

use crate::perm::{bucket_bounds, threshold_index, Permutation};
use crate::table::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainTest {
    pub feature_id: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainTable {
    pub dimension: usize,
    pub levels: Vec<PlainTest>,
    pub weights: Vec<f64>,
}

impl PlainTable {
    /// Leaf index of a sample: bit `D-1-d` is set when the level-`d` test fails.
    pub fn leaf(&self, row: &[f64]) -> usize {
        self.levels.iter().fold(0, |acc, t| (acc << 1) | (row[t.feature_id] >= t.threshold) as usize)
    }

    pub fn infer(&self, row: &[f64]) -> f64 {
        self.weights[self.leaf(row)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainParams {
    pub task: Task,
    pub trees: usize,
    pub depth: usize,
    pub buckets: usize,
    pub lambda: f64,
    pub shrinkage: f64,
}

/// Column-major dataset: `columns[j][i]` is feature `j` of sample `i`.
pub struct PlainData<'a> {
    pub columns: &'a [Vec<f64>],
}

impl PlainData<'_> {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// Candidate scores `[feature][bucket boundary]` for a level where sample `i`
/// sits in node `node_of[i]`.
pub fn level_scores(
    data: &PlainData,
    node_of: &[usize],
    nodes: usize,
    g: &[f64],
    h: &[f64],
    buckets: usize,
    lambda: f64,
) -> Vec<Vec<f64>> {
    let n = data.rows();
    let bounds = bucket_bounds(n, buckets).expect("bucket count validated by caller");
    data.columns
        .iter()
        .map(|col| {
            let perm = Permutation::sorting(col, 1);
            let order = perm.mapping();
            let mut scores = vec![0.0; buckets - 1];
            for k in 0..nodes {
                let masked = |v: &[f64], i: u32| if node_of[i as usize] == k { v[i as usize] } else { 0.0 };
                let alpha: Vec<f64> = bounds.iter().map(|r| order[r.clone()].iter().map(|&i| masked(g, i)).sum()).collect();
                let beta: Vec<f64> = bounds.iter().map(|r| order[r.clone()].iter().map(|&i| masked(h, i)).sum()).collect();
                let gt: f64 = alpha.iter().sum();
                let ht: f64 = beta.iter().sum();
                let (mut gl, mut hl) = (0.0, 0.0);
                for c in 0..buckets - 1 {
                    gl += alpha[c];
                    hl += beta[c];
                    let gr = gt - gl;
                    let hr = ht - hl;
                    scores[c] -= 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda));
                }
            }
            scores
        })
        .collect()
}

/// First index of the minimum under strict `<`.
pub fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Best (feature, bucket) of a score table: bucket per feature first, then feature.
pub fn choose(scores: &[Vec<f64>]) -> (usize, usize) {
    let per_feature: Vec<usize> = scores.iter().map(|s| argmin_first(s)).collect();
    let best: Vec<f64> = scores.iter().zip(&per_feature).map(|(s, &q)| s[q]).collect();
    let f = argmin_first(&best);
    (f, per_feature[f])
}

pub fn threshold_for(col: &[f64], buckets: usize, bucket: usize) -> f64 {
    let perm = Permutation::sorting(col, 1);
    perm.apply(col)[threshold_index(col.len(), buckets, bucket)]
}

/// Trains one oblivious table on given gradients.
pub fn train_plain_table(data: &PlainData, g: &[f64], h: &[f64], depth: usize, buckets: usize, lambda: f64, shrinkage: f64) -> PlainTable {
    let n = data.rows();
    let mut node_of = vec![0usize; n];
    let mut levels = Vec::with_capacity(depth);
    for d in 0..depth {
        let scores = level_scores(data, &node_of, 1 << d, g, h, buckets, lambda);
        let (f, q) = choose(&scores);
        let t = threshold_for(&data.columns[f], buckets, q);
        for (i, node) in node_of.iter_mut().enumerate() {
            *node = 2 * *node + (data.columns[f][i] >= t) as usize;
        }
        levels.push(PlainTest { feature_id: f, threshold: t });
    }
    let leaves = 1 << depth;
    let mut gs = vec![0.0; leaves];
    let mut hs = vec![0.0; leaves];
    for i in 0..n {
        gs[node_of[i]] += g[i];
        hs[node_of[i]] += h[i];
    }
    let weights = gs.iter().zip(&hs).map(|(g, h)| -g / (h + lambda) * shrinkage).collect();
    PlainTable { dimension: depth, levels, weights }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn gradients(task: Task, y: &[f64], yhat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match task {
        Task::Regression => (yhat.iter().zip(y).map(|(p, y)| p - y).collect(), vec![1.0; y.len()]),
        Task::Classification => {
            let p: Vec<f64> = yhat.iter().map(|&v| sigmoid(v)).collect();
            (p.iter().zip(y).map(|(p, y)| p - y).collect(), p.iter().map(|p| p * (1.0 - p)).collect())
        }
    }
}

/// Boosting with exact gradients; labels follow the same normalization contract as the secure path.
pub fn train_plain_ensemble(data: &PlainData, labels: &[f64], params: &PlainParams) -> Vec<PlainTable> {
    let n = data.rows();
    let mut yhat = vec![0.0; n];
    let mut tables = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        let (g, h) = gradients(params.task, labels, &yhat);
        let t = train_plain_table(data, &g, &h, params.depth, params.buckets, params.lambda, params.shrinkage);
        for (i, y) in yhat.iter_mut().enumerate() {
            *y += t.infer(&data.row(i));
        }
        tables.push(t);
    }
    tables
}

pub fn infer_plain(tables: &[PlainTable], row: &[f64]) -> f64 {
    tables.iter().map(|t| t.infer(row)).sum()
}

/// Cumulative ensemble scores after each table, `[t][sample]`.
pub fn staged_scores(tables: &[PlainTable], data: &PlainData) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..data.rows()).map(|i| data.row(i)).collect();
    let mut acc = vec![0.0; rows.len()];
    tables
        .iter()
        .map(|t| {
            for (a, r) in acc.iter_mut().zip(&rows) {
                *a += t.infer(r);
            }
            acc.clone()
        })
        .collect()
}
