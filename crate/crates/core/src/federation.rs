//! Parties, the boosting loop, prediction and metrics.
//!
//! Exactly one active party (AP) holds labels; the others are passive (PP).
//! Every party runs the same sequence of sessions: setup, label sharing, then
//! one session per table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dealer::Dealer;
use crate::error::{Error, Result};
use crate::math::ApproxConfig;
use crate::oracle::{staged_scores, train_plain_ensemble, PlainData, PlainParams, PlainTable};
use crate::ring::{FixedPointConfig, RingValue};
use crate::sharing::{Reveal, Scale, Session, SharedVector};
use crate::table::{compute_gradients, sec_infer, sec_table, DecisionTable, FeatureLayout, SortIndex, SplitParams, Task};
use crate::transport::{run_network, Endpoint, Network, PartyId, SessionTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RevealTo {
    Ap,
    All,
}

impl std::str::FromStr for RevealTo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ap" => Ok(RevealTo::Ap),
            "all" => Ok(RevealTo::All),
            other => Err(Error::Config(format!("unknown reveal target '{other}' (expected ap or all)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub parties: usize,
    pub active_party: PartyId,
    pub seed: u64,
    pub task: Task,
    pub trees: usize,
    pub depth: usize,
    pub buckets: usize,
    pub lambda: f64,
    pub shrinkage: f64,
    pub precision_bits: u32,
    pub newton_iters: u32,
    /// `None` picks `ceil(log2(N + lambda)) + 1` for split and leaf denominators
    /// and 10 for the sigmoid.
    pub newton_init_log2: Option<u32>,
    pub exp_log_rounds: u32,
    pub sigmoid_clamp: f64,
    pub reveal_predictions_to: RevealTo,
}

impl Default for FederationConfig {
    fn default() -> Self {
        let approx = ApproxConfig::default();
        FederationConfig {
            parties: 2,
            active_party: 1,
            seed: 0,
            task: Task::Classification,
            trees: 10,
            depth: 3,
            buckets: 32,
            lambda: 1.0,
            shrinkage: 1.0,
            precision_bits: 20,
            newton_iters: approx.newton_iters,
            newton_init_log2: None,
            exp_log_rounds: approx.exp_log_rounds,
            sigmoid_clamp: approx.sigmoid_clamp,
            reveal_predictions_to: RevealTo::Ap,
        }
    }
}

impl FederationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: FederationConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Start value `2^-20` everywhere and no sigmoid clamp.
    pub fn reference_mode(mut self) -> Self {
        let p = ApproxConfig::reference_mode();
        self.newton_init_log2 = Some(p.newton_init_log2);
        self.sigmoid_clamp = p.sigmoid_clamp;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(2..=255).contains(&self.parties) {
            return bad(format!("parties must be in [2, 255], got {}", self.parties));
        }
        if self.active_party == 0 || self.active_party > self.parties {
            return bad(format!("active_party {} is not one of the {} parties", self.active_party, self.parties));
        }
        if self.trees < 1 {
            return bad("trees must be at least 1".into());
        }
        if self.depth < 1 || self.depth > 16 {
            return bad(format!("depth must be in [1, 16], got {}", self.depth));
        }
        if self.buckets < 2 {
            return bad(format!("buckets must be at least 2, got {}", self.buckets));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.shrinkage > 0.0) {
            return bad(format!("shrinkage must be positive, got {}", self.shrinkage));
        }
        FixedPointConfig::new(self.precision_bits)?;
        self.sigmoid_approx().validate()
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        FixedPointConfig::new(self.precision_bits).expect("validated")
    }

    pub fn sigmoid_approx(&self) -> ApproxConfig {
        ApproxConfig {
            newton_iters: self.newton_iters,
            newton_init_log2: self.newton_init_log2.unwrap_or(ApproxConfig::default().newton_init_log2),
            exp_log_rounds: self.exp_log_rounds,
            sigmoid_clamp: self.sigmoid_clamp,
        }
    }

    /// Approximation settings for denominators bounded by `rows + lambda`.
    pub fn denominator_approx(&self, rows: usize) -> Result<ApproxConfig> {
        let k = match self.newton_init_log2 {
            Some(k) => k,
            None => (rows as f64 + self.lambda).log2().ceil() as u32 + 1,
        };
        if k > self.precision_bits {
            return Err(Error::Config(format!(
                "{rows} rows need a reciprocal start of 2^-{k}, finer than the {} precision bits",
                self.precision_bits
            )));
        }
        Ok(ApproxConfig { newton_init_log2: k, ..self.sigmoid_approx() })
    }

    fn tag(&self, what: &str) -> SessionTag {
        SessionTag::derive(&format!("vboost/{}/{what}", self.seed))
    }

    fn party_seed(&self) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5a5a
    }

    pub fn dealer(&self) -> Result<Dealer> {
        Dealer::new(self.seed, self.parties)
    }
}

/// Affine map of regression targets onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScaler {
    pub min: f64,
    pub max: f64,
}

impl LabelScaler {
    pub fn fit(labels: &[f64]) -> Self {
        let min = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        LabelScaler { min, max }
    }

    fn span(&self) -> f64 {
        if self.max > self.min {
            self.max - self.min
        } else {
            1.0
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        2.0 * (y - self.min) / self.span() - 1.0
    }

    pub fn inverse(&self, s: f64) -> f64 {
        (s + 1.0) / 2.0 * self.span() + self.min
    }
}

/// Labels the AP feeds into training, after the ingestion contract.
pub fn prepare_labels(task: Task, labels: &[f64]) -> Result<(Vec<f64>, Option<LabelScaler>)> {
    match task {
        Task::Classification => {
            if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
                return Err(Error::Input(format!("classification labels must be 0 or 1, found {bad}")));
            }
            Ok((labels.to_vec(), None))
        }
        Task::Regression => {
            let sc = LabelScaler::fit(labels);
            Ok((labels.iter().map(|&y| sc.forward(y)).collect(), Some(sc)))
        }
    }
}

/// AP shares its (prepared) labels. A passive party passing labels is a role error.
pub fn share_labels(s: &mut Session, ap: PartyId, labels: Option<&[f64]>, rows: usize) -> Result<SharedVector> {
    if s.id != ap && labels.is_some() {
        return Err(Error::Role(format!("party {} is passive and cannot share labels", s.id)));
    }
    if s.id == ap && labels.is_none() {
        return Err(Error::Role("the active party must provide labels".into()));
    }
    let enc = match labels {
        Some(l) => {
            if l.len() != rows {
                return Err(Error::shape(format!("{} labels for {rows} rows", l.len())));
            }
            Some(s.fp.encode_slice(l)?)
        }
        None => None,
    };
    s.scoped("share_labels", |s| s.input(ap, enc.as_deref(), rows, Scale::Fixed))
}

/// Exchanges row and column counts; checks rows agree and returns the feature layout.
pub fn setup_layout(s: &mut Session, rows: usize, cols: usize) -> Result<FeatureLayout> {
    let all = s.scoped("setup", |s| s.chan.exchange_all(&[rows as u64, cols as u64]))?;
    if let Some((p, r)) = all.iter().enumerate().find(|(_, w)| w[0] != rows as u64) {
        return Err(Error::Input(format!("party {} has {} rows but party {} has {rows}", p + 1, r[0], s.id)));
    }
    let counts: Vec<usize> = all.iter().map(|w| w[1] as usize).collect();
    Ok(FeatureLayout::from_counts(&counts))
}

/// One party's trained model.
#[derive(Clone, Debug)]
pub struct PartyModel {
    pub party: PartyId,
    pub task: Task,
    pub layout: FeatureLayout,
    pub tables: Vec<DecisionTable>,
    pub scaler: Option<LabelScaler>,
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    party: PartyId,
    task: Task,
    layout: FeatureLayout,
    tables: Vec<String>,
    scaler: Option<LabelScaler>,
}

impl PartyModel {
    pub fn is_active(&self, cfg: &FederationConfig) -> bool {
        self.party == cfg.active_party
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let stems: Vec<String> = (0..self.tables.len()).map(|t| format!("table{t:03}")).collect();
        for (t, stem) in self.tables.iter().zip(&stems) {
            t.save(dir, stem)?;
        }
        let manifest = ModelManifest { party: self.party, task: self.task, layout: self.layout.clone(), tables: stems, scaler: self.scaler };
        std::fs::write(dir.join("model.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: ModelManifest = serde_json::from_slice(&std::fs::read(dir.join("model.json"))?)?;
        let tables = m.tables.iter().map(|stem| DecisionTable::load(dir, stem, m.party)).collect::<Result<_>>()?;
        Ok(PartyModel { party: m.party, task: m.task, layout: m.layout, tables, scaler: m.scaler })
    }
}

/// Training output of one party: its model and its share of the training-set scores.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: PartyModel,
    pub train_scores: SharedVector,
}

/// Runs the boosting loop for one party.
pub fn train_party(cfg: &FederationConfig, endpoint: &Endpoint, dealer: &Dealer, data: &Dataset) -> Result<TrainOutput> {
    cfg.validate()?;
    let me = endpoint.party();
    let fp = cfg.fixed_point();
    let new_session = |what: &str| Session::new(endpoint, cfg.tag(what), cfg.party_seed(), dealer, fp);
    let rows = data.rows();

    let mut setup = new_session("setup");
    let layout = setup_layout(&mut setup, rows, data.features())?;
    let ap = cfg.active_party;
    let (labels, scaler) = match (&data.labels, me == ap) {
        (Some(l), true) => {
            let (l, sc) = prepare_labels(cfg.task, l)?;
            (Some(l), sc)
        }
        (None, true) => return Err(Error::Role("the active party holds no labels".into())),
        (Some(_), false) => return Err(Error::Role(format!("passive party {me} must not hold labels"))),
        (None, false) => (None, None),
    };
    let y = share_labels(&mut setup, ap, labels.as_deref(), rows)?;
    drop(setup);

    let index = SortIndex::build(me, &layout, &data.columns)?;
    let params = SplitParams { buckets: cfg.buckets, lambda: cfg.lambda, approx: cfg.denominator_approx(rows)? };
    let sig = cfg.sigmoid_approx();
    let mut yhat = SharedVector::new(me, vec![RingValue::ZERO; rows], Scale::Fixed, y.session_tag);
    let mut tables = Vec::with_capacity(cfg.trees);
    for t in 0..cfg.trees {
        let mut s = new_session(&format!("table{t}"));
        let grads = compute_gradients(&mut s, &y, &yhat, cfg.task, &sig)?;
        let table = s.scoped("train", |s| {
            sec_table(s, &layout, &index, &data.columns, grads, cfg.depth, &params, cfg.shrinkage, &format!("table{t:03}"))
        })?;
        let update = s.scoped("update", |s| sec_infer(s, &[&table], &layout, &data.columns, rows))?;
        yhat = yhat.add(&update[0])?;
        tables.push(table);
        log::debug!("party {me}: table {t} done");
    }
    Ok(TrainOutput { model: PartyModel { party: me, task: cfg.task, layout, tables, scaler }, train_scores: yhat })
}

/// Trains all parties over `net`; `data[p - 1]` is party p's partition.
pub fn train(cfg: &FederationConfig, net: &Network, data: &[Dataset]) -> Result<Vec<TrainOutput>> {
    cfg.validate()?;
    if data.len() != cfg.parties || net.parties() != cfg.parties {
        return Err(Error::Config(format!("{} partitions and {} network endpoints for {} parties", data.len(), net.parties(), cfg.parties)));
    }
    let dealer = cfg.dealer()?;
    run_network(net, |ep| train_party(cfg, ep, &dealer, &data[ep.party() - 1]))
}

/// Scores revealed to a party: final scores and the cumulative score after each table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    pub scores: Vec<f64>,
    pub staged: Vec<Vec<f64>>,
}

/// Secure prediction for one party. Returns `None` where the policy reveals nothing.
/// Regression scores are mapped back to label units at the AP; other
/// recipients see the normalized scale.
pub fn predict_party(
    cfg: &FederationConfig,
    endpoint: &Endpoint,
    dealer: &Dealer,
    model: &PartyModel,
    data: &Dataset,
    session: &str,
) -> Result<Option<Predictions>> {
    let me = endpoint.party();
    let rows = data.rows();
    let mut s = Session::new(endpoint, cfg.tag(session), cfg.party_seed(), dealer, cfg.fixed_point());
    let layout = setup_layout(&mut s, rows, data.features())?;
    if layout != model.layout {
        return Err(Error::shape("prediction data does not match the model's feature layout"));
    }
    let target = match cfg.reveal_predictions_to {
        RevealTo::Ap => Reveal::To(cfg.active_party),
        RevealTo::All => Reveal::All,
    };
    let tables: Vec<&DecisionTable> = model.tables.iter().collect();
    let per_table = if tables.is_empty() { Vec::new() } else { sec_infer(&mut s, &tables, &model.layout, &data.columns, rows)? };
    let mut acc = SharedVector::new(me, vec![RingValue::ZERO; rows], Scale::Fixed, s.tag());
    let mut stages = Vec::with_capacity(per_table.len());
    for t in &per_table {
        acc = acc.add(t)?;
        stages.push(acc.clone());
    }
    if stages.is_empty() {
        stages.push(acc.clone());
    }
    let refs: Vec<&SharedVector> = stages.iter().collect();
    let joined = SharedVector::concat(&refs)?;
    let opened = s.scoped("reveal", |s| s.reveal(&joined, target))?;
    Ok(opened.map(|v| {
        let fp = s.fp;
        let unscale = |x: f64| match (model.task, model.scaler) {
            (Task::Regression, Some(sc)) => sc.inverse(x),
            _ => x,
        };
        let staged: Vec<Vec<f64>> = v.chunks(rows.max(1)).take(stages.len()).map(|c| c.iter().map(|&w| unscale(fp.decode(w))).collect()).collect();
        let scores = if rows == 0 { Vec::new() } else { staged.last().cloned().unwrap_or_default() };
        let staged = if per_table.is_empty() { Vec::new() } else { staged };
        Predictions { scores, staged }
    }))
}

pub fn predict(cfg: &FederationConfig, net: &Network, models: &[PartyModel], data: &[Dataset]) -> Result<Vec<Option<Predictions>>> {
    if models.len() != cfg.parties || data.len() != cfg.parties {
        return Err(Error::Config("need one model and one partition per party".into()));
    }
    let dealer = cfg.dealer()?;
    run_network(net, |ep| {
        let p = ep.party();
        predict_party(cfg, ep, &dealer, &models[p - 1], &data[p - 1], "predict")
    })
}

/// Columns of all partitions in global feature order.
pub fn global_columns(parts: &[Dataset]) -> Vec<Vec<f64>> {
    parts.iter().flat_map(|p| p.columns.iter().cloned()).collect()
}

/// Trains the plaintext oracle on the joined partitions under the same label
/// contract and scores `test`, in label units.
pub fn plaintext_baseline(cfg: &FederationConfig, train: &[Dataset], test: &[Dataset]) -> Result<(Vec<PlainTable>, Predictions)> {
    cfg.validate()?;
    let labels = train
        .get(cfg.active_party - 1)
        .and_then(|d| d.labels.as_ref())
        .ok_or_else(|| Error::Role("the active party holds no labels".into()))?;
    let (y, scaler) = prepare_labels(cfg.task, labels)?;
    let cols = global_columns(train);
    let params = PlainParams {
        task: cfg.task,
        trees: cfg.trees,
        depth: cfg.depth,
        buckets: cfg.buckets,
        lambda: cfg.lambda,
        shrinkage: cfg.shrinkage,
    };
    let tables = train_plain_ensemble(&PlainData { columns: &cols }, &y, &params);
    let test_cols = global_columns(test);
    let unscale = |x: f64| scaler.map_or(x, |sc| sc.inverse(x));
    let staged: Vec<Vec<f64>> = staged_scores(&tables, &PlainData { columns: &test_cols })
        .into_iter()
        .map(|v| v.into_iter().map(unscale).collect())
        .collect();
    let scores = staged.last().cloned().unwrap_or_default();
    Ok((tables, Predictions { scores, staged }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

pub fn rmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_len(pred, y)?;
    Ok((pred.iter().zip(y).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / y.len() as f64).sqrt())
}

/// Fraction of samples where `score >= 0` agrees with label 1.
pub fn accuracy(scores: &[f64], y: &[f64]) -> Result<f64> {
    check_len(scores, y)?;
    Ok(scores.iter().zip(y).filter(|(s, y)| (**s >= 0.0) == (**y == 1.0)).count() as f64 / y.len() as f64)
}

/// Rank-statistic AUC; tied pairs count one half.
pub fn auc(scores: &[f64], y: &[f64]) -> Result<f64> {
    check_len(scores, y)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count() as f64;
    let neg = y.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Input("AUC needs both classes".into()));
    }
    let rank_sum: f64 = ranks.iter().zip(y).filter(|(_, &v)| v == 1.0).map(|(r, _)| r).sum();
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!("{} predictions for {} labels", a.len(), b.len())));
    }
    Ok(())
}

pub fn evaluate(task: Task, scores: &[f64], y: &[f64]) -> Result<Metrics> {
    Ok(match task {
        Task::Regression => Metrics { rmse: Some(rmse(scores, y)?), ..Default::default() },
        Task::Classification => Metrics { acc: Some(accuracy(scores, y)?), auc: Some(auc(scores, y)?), ..Default::default() },
    })
}
