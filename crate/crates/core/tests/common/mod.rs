#![allow(dead_code)]

use std::path::PathBuf;

use vboost_core::data::{train_test_split, Dataset};
use vboost_core::federation::{self, FederationConfig, Metrics, Predictions, TrainOutput};
use vboost_core::transport::{Network, NetworkConfig, TrafficStats};
use vboost_core::Result;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn breast_cancer() -> Dataset {
    Dataset::load_csv(&data_path("breast_cancer.csv"), Some("target")).expect("bundled dataset")
}

/// Seeded 80/20 split, each side partitioned over `n` parties.
pub fn split(ds: &Dataset, n: usize, seed: u64) -> (Vec<Dataset>, Vec<Dataset>) {
    let (tr, te) = train_test_split(ds.rows(), 0.8, seed);
    (ds.select_rows(&tr).partition(n).unwrap(), ds.select_rows(&te).partition(n).unwrap())
}

pub struct Run {
    pub train: Vec<TrainOutput>,
    pub predictions: Predictions,
    pub metrics: Metrics,
    pub train_stats: TrafficStats,
    pub net: Network,
}

pub fn secure_run(cfg: &FederationConfig, train: &[Dataset], test: &[Dataset], net_cfg: NetworkConfig) -> Result<Run> {
    let net = Network::new(cfg.parties, net_cfg)?;
    let out = federation::train(cfg, &net, train)?;
    let train_stats = net.stats();
    let models: Vec<_> = out.iter().map(|o| o.model.clone()).collect();
    let preds = federation::predict(cfg, &net, &models, test)?;
    let ap = preds[cfg.active_party - 1].clone().expect("AP receives predictions");
    let labels = test[cfg.active_party - 1].labels.as_ref().unwrap();
    let metrics = federation::evaluate(cfg.task, &ap.scores, labels)?;
    Ok(Run { train: out, predictions: ap, metrics, train_stats, net })
}

pub fn plain_run(cfg: &FederationConfig, train: &[Dataset], test: &[Dataset]) -> Metrics {
    let (_, p) = federation::plaintext_baseline(cfg, train, test).unwrap();
    federation::evaluate(cfg.task, &p.scores, test[cfg.active_party - 1].labels.as_ref().unwrap()).unwrap()
}

/// Prints one acceptance line and returns whether it passed.
pub fn report(criterion: &str, pass: bool, detail: &str) -> bool {
    println!("[{}] {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
