//! Decision-table training and inference over shares.
//!
//! A table of dimension `D` has one test `x[F_d] < t_d` per level and `2^D`
//! leaves. A sample's leaf index has bit `D-1-d` set when it fails the level-`d`
//! test, so level 0 is the most significant bit and "test true" is 0.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sec_argmin, sec_argmin_rows, sec_div, sec_sigmoid, ApproxConfig};
use crate::perm::{sec_disc_batch, threshold_index, DiscJob, Permutation};
use crate::ring::RingValue;
use crate::sharing::{Scale, Session, SharedVector};
use crate::transport::PartyId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::Config(format!("unknown task '{other}' (expected regression or classification)"))),
        }
    }
}

/// Which party owns each global feature, and its column index there.
/// Global ids run over parties in order, then over each party's columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub owners: Vec<PartyId>,
    pub local_index: Vec<usize>,
}

impl FeatureLayout {
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut owners = Vec::new();
        let mut local_index = Vec::new();
        for (p, &c) in counts.iter().enumerate() {
            for i in 0..c {
                owners.push(p + 1);
                local_index.push(i);
            }
        }
        FeatureLayout { owners, local_index }
    }

    pub fn features(&self) -> usize {
        self.owners.len()
    }

    pub fn owned_by(&self, party: PartyId) -> impl Iterator<Item = usize> + '_ {
        (0..self.owners.len()).filter(move |&j| self.owners[j] == party)
    }
}

/// Sort order and sorted values of this party's own columns.
#[derive(Clone, Debug, Default)]
pub struct SortIndex {
    perms: BTreeMap<usize, Permutation>,
    sorted: BTreeMap<usize, Vec<f64>>,
}

impl SortIndex {
    pub fn build(party: PartyId, layout: &FeatureLayout, columns: &[Vec<f64>]) -> Result<Self> {
        let mut index = SortIndex::default();
        for j in layout.owned_by(party) {
            let col = columns
                .get(layout.local_index[j])
                .ok_or_else(|| Error::shape(format!("party {party} lacks column for feature {j}")))?;
            let perm = Permutation::sorting(col, party);
            index.sorted.insert(j, perm.apply(col));
            index.perms.insert(j, perm);
        }
        Ok(index)
    }

    pub fn perm(&self, feature: usize) -> Option<&Permutation> {
        self.perms.get(&feature)
    }

    pub fn sorted(&self, feature: usize) -> Option<&[f64]> {
        self.sorted.get(&feature).map(|v| v.as_slice())
    }
}

/// Gradient pair of one node: zero outside the node's samples.
#[derive(Clone, Debug)]
pub struct NodeGradients {
    pub g: SharedVector,
    pub h: SharedVector,
}

pub type LevelGradients = Vec<NodeGradients>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub buckets: usize,
    pub lambda: f64,
    pub approx: ApproxConfig,
}

/// Outcome of one level's split search as seen by one party.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSplit {
    pub feature: usize,
    pub bucket: usize,
    /// Present only at the feature owner.
    pub threshold: Option<f64>,
    /// Best bucket of every feature; public by construction of the search.
    pub bucket_ids: Vec<usize>,
}

/// Gradients of the loss at `yhat`. Regression: `g = yhat - y`, `h = 1`.
/// Classification: `p = sigmoid(yhat)`, `g = p - y`, `h = p(1 - p)`.
pub fn compute_gradients(
    s: &mut Session,
    y: &SharedVector,
    yhat: &SharedVector,
    task: Task,
    approx: &ApproxConfig,
) -> Result<NodeGradients> {
    if y.len() != yhat.len() {
        return Err(Error::shape("labels and predictions differ in length"));
    }
    s.scoped("gradients", |s| match task {
        Task::Regression => {
            let g = yhat.sub(y)?;
            let one = s.fp.one();
            let h = s.constant(&vec![one; y.len()], Scale::Fixed);
            Ok(NodeGradients { g, h })
        }
        Task::Classification => {
            let p = sec_sigmoid(s, yhat, approx)?;
            let g = p.sub(y)?;
            let one_minus = p.neg().add_public_scalar(s.fp.one());
            let h = s.mul_trunc(&p, &one_minus)?;
            Ok(NodeGradients { g, h })
        }
    })
}

/// Splits every node of a level by the owner's test; children `2k` (left) and
/// `2k+1` (right). `left` is the test outcome per sample, known to the owner only.
pub fn sec_split(s: &mut Session, owner: PartyId, left: Option<&[bool]>, level: &[NodeGradients]) -> Result<LevelGradients> {
    let len = level.first().map(|n| n.g.len()).ok_or_else(|| Error::shape("no nodes to split"))?;
    if let Some(l) = left {
        if l.len() != len {
            return Err(Error::shape("indicator length differs from gradient length"));
        }
    }
    s.scoped("sec_split", |s| {
        let (vl, vr): (Option<Vec<RingValue>>, Option<Vec<RingValue>>) = match left {
            Some(l) => (
                Some(l.iter().map(|&b| RingValue(b as u64)).collect()),
                Some(l.iter().map(|&b| RingValue(!b as u64)).collect()),
            ),
            None => (None, None),
        };
        let inputs = s.scoped("input", |s| {
            s.input_round(&[(owner, vl.as_deref(), len, Scale::Raw), (owner, vr.as_deref(), len, Scale::Raw)])
        })?;
        let (vl, vr) = (&inputs[0], &inputs[1]);
        let mut pairs = Vec::with_capacity(4 * level.len());
        for node in level {
            pairs.push((vl, &node.g));
            pairs.push((vl, &node.h));
            pairs.push((vr, &node.g));
            pairs.push((vr, &node.h));
        }
        let prods = s.mul_batch(&pairs)?;
        let mut out = Vec::with_capacity(2 * level.len());
        for chunk in prods.chunks(4) {
            out.push(NodeGradients { g: chunk[0].clone(), h: chunk[1].clone() });
            out.push(NodeGradients { g: chunk[2].clone(), h: chunk[3].clone() });
        }
        Ok(out)
    })
}

/// Shares of the candidate scores, `features x (buckets - 1)` row-major.
/// Each entry is `-1/2 * sum over nodes (G_l^2/(H_l+lambda) + G_r^2/(H_r+lambda))`.
pub fn level_scores(
    s: &mut Session,
    layout: &FeatureLayout,
    index: &SortIndex,
    level: &[NodeGradients],
    params: &SplitParams,
) -> Result<Vec<SharedVector>> {
    let b = params.buckets;
    if b < 2 {
        return Err(Error::Config(format!("need at least 2 buckets, got {b}")));
    }
    let me = s.id;
    let jf = layout.features();
    if jf == 0 {
        return Err(Error::Config("no features to split on".into()));
    }
    let mut jobs = Vec::with_capacity(jf * level.len());
    for j in 0..jf {
        let owner = layout.owners[j];
        let perm = if owner == me {
            Some(index.perm(j).ok_or_else(|| Error::protocol(format!("missing sort order for feature {j}")))?)
        } else {
            None
        };
        for node in level {
            jobs.push(DiscJob { owner, perm, g: &node.g, h: &node.h });
        }
    }
    let sums = sec_disc_batch(s, &jobs, b)?;

    s.scoped("score", |s| {
        let lambda = s.fp.encode(params.lambda)?;
        // Layout of the flattened candidates: (feature, node, candidate, side).
        let mut num = Vec::with_capacity(sums.len() * (b - 1) * 2);
        let mut den = Vec::with_capacity(num.capacity());
        for bs in &sums {
            let g_tot: RingValue = bs.alpha.values.iter().copied().sum();
            let h_tot: RingValue = bs.beta.values.iter().copied().sum();
            let (mut gl, mut hl) = (RingValue::ZERO, RingValue::ZERO);
            for c in 0..b - 1 {
                gl += bs.alpha.values[c];
                hl += bs.beta.values[c];
                num.push(gl);
                num.push(g_tot - gl);
                den.push(hl);
                den.push(h_tot - hl);
            }
        }
        let tag = s.tag();
        let num = SharedVector::new(me, num, Scale::Fixed, tag);
        let den = SharedVector::new(me, den, Scale::Fixed, tag).add_public_scalar(lambda);
        let ratio = sec_div(s, &num, &den, &params.approx)?;
        let prod = s.mul(&num, &ratio)?;
        let per_node = 2 * (b - 1);
        let nodes = level.len();
        let mut acc = vec![RingValue::ZERO; jf * (b - 1)];
        for j in 0..jf {
            for k in 0..nodes {
                let base = (j * nodes + k) * per_node;
                for c in 0..b - 1 {
                    acc[j * (b - 1) + c] += prod.values[base + 2 * c] + prod.values[base + 2 * c + 1];
                }
            }
        }
        let summed = SharedVector::new(me, acc, Scale::Double, tag);
        let l = s.fp.precision_bits();
        let halved = s.truncate_bits(&summed, l + 1, Scale::Fixed)?.neg();
        Ok((0..jf).map(|j| halved.slice(j * (b - 1)..(j + 1) * (b - 1))).collect())
    })
}

/// Searches the best (feature, bucket) of one level. Feature and bucket become
/// public; the threshold is read from the owner's sorted column.
pub fn find_level_split(
    s: &mut Session,
    layout: &FeatureLayout,
    index: &SortIndex,
    level: &[NodeGradients],
    params: &SplitParams,
) -> Result<LevelSplit> {
    let n = level.first().map(|node| node.g.len()).ok_or_else(|| Error::shape("empty level"))?;
    s.scoped("find_split", |s| {
        let scores = level_scores(s, layout, index, level, params)?;
        let (bucket_ids, best) = sec_argmin_rows(s, &scores)?;
        let feature = sec_argmin(s, &best)?;
        let bucket = bucket_ids[feature];
        let threshold = if layout.owners[feature] == s.id {
            let sorted = index.sorted(feature).ok_or_else(|| Error::protocol("owner lacks sorted values"))?;
            Some(sorted[threshold_index(n, params.buckets, bucket)])
        } else {
            None
        };
        Ok(LevelSplit { feature, bucket, threshold, bucket_ids })
    })
}

/// Leaf weights `-G/(H + lambda)`, optionally scaled by a public shrinkage.
pub fn compute_leaf_weights(
    s: &mut Session,
    leaves: &[NodeGradients],
    lambda: f64,
    shrinkage: f64,
    approx: &ApproxConfig,
) -> Result<SharedVector> {
    if leaves.is_empty() {
        return Err(Error::shape("no leaves"));
    }
    s.scoped("leaf_weights", |s| {
        let me = s.id;
        let tag = s.tag();
        let g = SharedVector::new(me, leaves.iter().map(|l| l.g.values.iter().copied().sum()).collect(), Scale::Fixed, tag);
        let h = SharedVector::new(me, leaves.iter().map(|l| l.h.values.iter().copied().sum()).collect(), Scale::Fixed, tag);
        let den = h.add_public_scalar(s.fp.encode(lambda)?);
        let w = sec_div(s, &g, &den, approx)?.neg();
        if shrinkage == 1.0 {
            Ok(w)
        } else {
            s.mul_public(&w, shrinkage)
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLevel {
    pub feature_id: usize,
    pub owner_id: PartyId,
}

/// The part of a table every party may see.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicTable {
    pub dimension: usize,
    pub levels: Vec<TableLevel>,
    pub weights_handle: String,
}

/// One party's view of a trained table.
#[derive(Clone, Debug)]
pub struct DecisionTable {
    pub public: PublicTable,
    /// Thresholds of the levels this party owns, by level.
    pub thresholds: BTreeMap<usize, f64>,
    pub weights: SharedVector,
}

impl DecisionTable {
    pub fn dimension(&self) -> usize {
        self.public.dimension
    }

    /// Writes `<stem>.json` (public), `<stem>.thresholds.json` and `<stem>.weights.bin`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&self.public)?)?;
        std::fs::write(dir.join(format!("{stem}.thresholds.json")), serde_json::to_vec_pretty(&self.thresholds)?)?;
        let bytes: Vec<u8> = self.weights.values.iter().flat_map(|v| v.0.to_le_bytes()).collect();
        std::fs::write(dir.join(&self.public.weights_handle), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str, party: PartyId) -> Result<Self> {
        let public: PublicTable = serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json")))?)?;
        let thresholds = serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.thresholds.json")))?)?;
        let bytes = std::fs::read(dir.join(&public.weights_handle))?;
        if bytes.len() != 8 << public.dimension {
            return Err(Error::Input(format!("weights file holds {} bytes, expected {}", bytes.len(), 8 << public.dimension)));
        }
        let values = bytes.chunks_exact(8).map(|c| RingValue(u64::from_le_bytes(c.try_into().unwrap()))).collect();
        let weights = SharedVector::new(party, values, Scale::Fixed, crate::transport::SessionTag::derive(&public.weights_handle));
        Ok(DecisionTable { public, thresholds, weights })
    }
}

/// Trains one table: gradients, `D` levels of split search and splitting, leaf weights.
#[allow(clippy::too_many_arguments)]
pub fn sec_table(
    s: &mut Session,
    layout: &FeatureLayout,
    index: &SortIndex,
    columns: &[Vec<f64>],
    grads: NodeGradients,
    depth: usize,
    params: &SplitParams,
    shrinkage: f64,
    handle: &str,
) -> Result<DecisionTable> {
    if depth == 0 {
        return Err(Error::Config("table dimension must be at least 1".into()));
    }
    let mut level = vec![grads];
    let mut levels = Vec::with_capacity(depth);
    let mut thresholds = BTreeMap::new();
    for d in 0..depth {
        let split = s.scoped(&format!("level{d}"), |s| find_level_split(s, layout, index, &level, params))?;
        let owner = layout.owners[split.feature];
        let left: Option<Vec<bool>> = split.threshold.map(|t| {
            let col = &columns[layout.local_index[split.feature]];
            col.iter().map(|&v| v < t).collect()
        });
        if let Some(t) = split.threshold {
            thresholds.insert(d, t);
        }
        level = sec_split(s, owner, left.as_deref(), &level)?;
        levels.push(TableLevel { feature_id: split.feature, owner_id: owner });
    }
    let weights = compute_leaf_weights(s, &level, params.lambda, shrinkage, &params.approx)?;
    Ok(DecisionTable {
        public: PublicTable { dimension: depth, levels, weights_handle: format!("{handle}.weights.bin") },
        thresholds,
        weights,
    })
}

/// Leaf indicator of one level: entry `k` is 1 iff bit `D-1-d` of `k` equals `right`.
pub fn leaf_indicator(depth: usize, level: usize, right: bool) -> Vec<u64> {
    let shift = depth - 1 - level;
    (0..1usize << depth).map(|k| (((k >> shift) & 1 == 1) == right) as u64).collect()
}

/// Shares of each sample's selected leaf weight. `columns` are this party's
/// columns for the samples to score, `samples` rows long.
pub fn sec_infer(
    s: &mut Session,
    tables: &[&DecisionTable],
    layout: &FeatureLayout,
    columns: &[Vec<f64>],
    samples: usize,
) -> Result<Vec<SharedVector>> {
    let me = s.id;
    s.scoped("sec_infer", |s| {
        // One input round carries every level of every table.
        let mut plain: Vec<(PartyId, Option<Vec<RingValue>>, usize)> = Vec::new();
        for t in tables {
            let depth = t.dimension();
            if t.public.levels.len() != depth || t.weights.len() != 1 << depth {
                return Err(Error::shape("table dimension does not match its levels or weights"));
            }
            for (d, lvl) in t.public.levels.iter().enumerate() {
                let width = samples << depth;
                let values = if lvl.owner_id == me {
                    let thr = t.thresholds.get(&d).ok_or_else(|| Error::protocol(format!("owner lacks threshold of level {d}")))?;
                    let col = columns
                        .get(layout.local_index[lvl.feature_id])
                        .ok_or_else(|| Error::shape("missing feature column"))?;
                    if col.len() != samples {
                        return Err(Error::shape(format!("feature column has {} rows, expected {samples}", col.len())));
                    }
                    let left = leaf_indicator(depth, d, false);
                    let right = leaf_indicator(depth, d, true);
                    let mut v = Vec::with_capacity(width);
                    for &x in col {
                        v.extend(if x < *thr { &left } else { &right }.iter().map(|&b| RingValue(b)));
                    }
                    Some(v)
                } else {
                    None
                };
                plain.push((lvl.owner_id, values, width));
            }
        }
        let requests: Vec<(PartyId, Option<&[RingValue]>, usize, Scale)> =
            plain.iter().map(|(o, v, w)| (*o, v.as_deref(), *w, Scale::Raw)).collect();
        let mut inputs = s.scoped("input", |s| s.input_round(&requests))?.into_iter();

        // Factors per table: the D indicators and the tiled weights, multiplied as a tree.
        let mut factors: Vec<Vec<SharedVector>> = Vec::with_capacity(tables.len());
        for t in tables {
            let mut f: Vec<SharedVector> = (0..t.dimension()).map(|_| inputs.next().unwrap()).collect();
            let tiled: Vec<RingValue> = (0..samples).flat_map(|_| t.weights.values.iter().copied()).collect();
            f.push(SharedVector::new(me, tiled, Scale::Fixed, s.tag()));
            factors.push(f);
        }
        while factors.iter().any(|f| f.len() > 1) {
            let mut pairs = Vec::new();
            for f in &factors {
                for c in f.chunks(2).filter(|c| c.len() == 2) {
                    pairs.push((&c[0], &c[1]));
                }
            }
            let mut prods = s.mul_batch(&pairs)?.into_iter();
            factors = factors
                .iter()
                .map(|f| {
                    let mut next: Vec<SharedVector> = f.chunks(2).filter(|c| c.len() == 2).map(|_| prods.next().unwrap()).collect();
                    if f.len() % 2 == 1 {
                        next.push(f.last().unwrap().clone());
                    }
                    next
                })
                .collect();
        }
        Ok(tables
            .iter()
            .zip(factors)
            .map(|(t, mut f)| {
                let sel = f.pop().unwrap();
                let leaves = 1 << t.dimension();
                let values = sel.values.chunks(leaves).map(|c| c.iter().copied().sum()).collect();
                SharedVector::new(me, values, Scale::Fixed, sel.session_tag)
            })
            .collect())
    })
}
