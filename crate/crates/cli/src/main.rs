//! `vboost`: secure gradient-boosted decision tables over vertically split data.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use vboost_core::audit::{transcript_audit, ForbiddenSet};
use vboost_core::data::{generate_synthetic, train_test_split, Dataset, SynthSpec};
use vboost_core::federation::{self, FederationConfig, Metrics, PartyModel, Predictions, RevealTo};
use vboost_core::table::Task;
use vboost_core::transport::{Network, NetworkConfig, TrafficStats};

#[derive(Parser)]
#[command(name = "vboost", version, about = "Secure boosted decision tables for vertically partitioned data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a CSV into per-party train/test files.
    SplitDataset(SplitArgs),
    /// Generate a synthetic dataset.
    GenSynth(SynthArgs),
    /// Train a secure model on a split directory.
    Train(TrainArgs),
    /// Score a split with a trained model.
    Predict(PredictArgs),
    /// Compute metrics for a trained model, optionally against the plaintext baseline.
    Eval(EvalArgs),
    /// Train, predict and evaluate in one go.
    Run(TrainArgs),
    /// Measure traffic and time over a range of sample counts.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label: String,
    #[arg(long)]
    parties: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    features: usize,
    #[arg(long)]
    informative: Option<usize>,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Regression,
    Classification,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Regression => Task::Regression,
            TaskArg::Classification => Task::Classification,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Secure,
    Plaintext,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum RevealArg {
    Ap,
    All,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    parties: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    buckets: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reciprocal start 2^-20 and no sigmoid clamp.
    #[arg(long)]
    reference_mode: bool,
    #[arg(long, value_enum)]
    reveal_to: Option<RevealArg>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<FederationConfig> {
        let mut cfg = match &self.config {
            Some(p) => FederationConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => FederationConfig::default(),
        };
        if let Some(v) = self.parties {
            cfg.parties = v;
        }
        if let Some(v) = self.trees {
            cfg.trees = v;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.buckets {
            cfg.buckets = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.task {
            cfg.task = v.into();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.reveal_to {
            cfg.reveal_predictions_to = match v {
                RevealArg::Ap => RevealTo::Ap,
                RevealArg::All => RevealTo::All,
            };
        }
        if self.reference_mode {
            cfg = cfg.reference_mode();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Directory written by split-dataset.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for model, reports and metrics.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "secure")]
    mode: Mode,
    /// Record transcripts and scan passive-party traffic for plaintext leaks.
    #[arg(long)]
    audit: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, value_enum)]
    reveal_to: Option<RevealArg>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "secure")]
    mode: Mode,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
    samples: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    features: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Written next to the split files so later commands can find them.
#[derive(Serialize, Deserialize)]
struct SplitManifest {
    source: String,
    label: String,
    parties: usize,
    seed: u64,
    train_fraction: f64,
    train_rows: usize,
    test_rows: usize,
    features_per_party: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    config: FederationConfig,
    data: PathBuf,
    mode: Mode,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn party_file(dir: &Path, split: &str, p: usize) -> PathBuf {
    dir.join(split).join(format!("party{p}.csv"))
}

fn load_split(dir: &Path, split: &str, active: usize) -> Result<Vec<Dataset>> {
    let m: SplitManifest = read_json(&dir.join("split.json"))?;
    (1..=m.parties)
        .map(|p| {
            let label = (p == active).then_some(m.label.as_str());
            Dataset::load_csv(&party_file(dir, split, p), label).with_context(|| format!("loading party {p} {split} data"))
        })
        .collect()
}

fn split_dataset(a: &SplitArgs) -> Result<()> {
    let ds = Dataset::load_csv(&a.input, Some(&a.label))?;
    if !(0.0..1.0).contains(&a.train_fraction) || a.train_fraction == 0.0 {
        bail!("--train-fraction must be in (0, 1)");
    }
    let (tr, te) = train_test_split(ds.rows(), a.train_fraction, a.seed);
    let mut features = Vec::new();
    for (name, rows) in [("train", &tr), ("test", &te)] {
        fs::create_dir_all(a.out.join(name))?;
        let parts = ds.select_rows(rows).partition(a.parties)?;
        features = parts.iter().map(|p| p.feature_names.clone()).collect();
        for (i, part) in parts.iter().enumerate() {
            part.write_csv(&party_file(&a.out, name, i + 1))?;
        }
    }
    write_json(
        &a.out.join("split.json"),
        &SplitManifest {
            source: a.input.display().to_string(),
            label: a.label.clone(),
            parties: a.parties,
            seed: a.seed,
            train_fraction: a.train_fraction,
            train_rows: tr.len(),
            test_rows: te.len(),
            features_per_party: features,
        },
    )?;
    println!("wrote {} train and {} test rows for {} parties to {}", tr.len(), te.len(), a.parties, a.out.display());
    Ok(())
}

fn gen_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        samples: a.samples,
        features: a.features,
        informative: a.informative.unwrap_or(a.features),
        task: a.task.into(),
        noise: a.noise,
        seed: a.seed,
    };
    generate_synthetic(&spec)?.write_csv(&a.out)?;
    println!("wrote {} x {} to {}", a.samples, a.features, a.out.display());
    Ok(())
}

fn forbidden_words(cfg: &FederationConfig, train: &[Dataset], models: &[PartyModel]) -> ForbiddenSet {
    let fp = cfg.fixed_point();
    let mut f = ForbiddenSet::new();
    for d in train {
        for c in &d.columns {
            f.add_values("feature", c, &fp);
        }
        if let Some(l) = &d.labels {
            f.add_values("label", l, &fp);
            if let Ok((prepared, _)) = federation::prepare_labels(cfg.task, l) {
                f.add_values("label", &prepared, &fp);
            }
        }
    }
    for m in models {
        for t in &m.tables {
            f.add_values("threshold", &t.thresholds.values().copied().collect::<Vec<_>>(), &fp);
        }
    }
    f
}

fn train(a: &TrainArgs) -> Result<(FederationConfig, Vec<PartyModel>)> {
    let cfg = a.cfg.resolve()?;
    let split: SplitManifest = read_json(&a.data.join("split.json"))?;
    if split.parties != cfg.parties {
        bail!("data was split for {} parties but the config has {}", split.parties, cfg.parties);
    }
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("manifest.json"), &RunManifest { config: cfg.clone(), data: a.data.clone(), mode: a.mode })?;
    if a.mode == Mode::Plaintext {
        return Ok((cfg, Vec::new()));
    }
    let train = load_split(&a.data, "train", cfg.active_party)?;
    let net = Network::new(cfg.parties, NetworkConfig { audit: a.audit, ..Default::default() })?;
    let start = Instant::now();
    let out = federation::train(&cfg, &net, &train)?;
    let elapsed = start.elapsed().as_secs_f64();
    let models: Vec<PartyModel> = out.into_iter().map(|o| o.model).collect();
    for m in &models {
        m.save(&a.out.join("model").join(format!("party{}", m.party)))?;
    }
    let stats = net.stats();
    write_json(&a.out.join("traffic.json"), &stats)?;
    write_json(&a.out.join("timing.json"), &serde_json::json!({ "train_wall_seconds": elapsed }))?;
    println!(
        "trained {} tables: {} rounds, {} bytes, modeled {:.1} s, wall {:.1} s",
        cfg.trees, stats.totals.rounds, stats.totals.bytes, stats.modeled_seconds, elapsed
    );
    if a.audit {
        let report = transcript_audit(&net, &forbidden_words(&cfg, &train, &models), cfg.active_party);
        write_json(&a.out.join("audit.json"), &report)?;
        println!("audit: {} frames scanned, {} forbidden hits", report.frames_scanned, report.hits.len());
        if !report.clean() {
            bail!("transcript audit found {} plaintext leaks", report.hits.len());
        }
    }
    Ok((cfg, models))
}

fn load_models(run: &Path, parties: usize) -> Result<Vec<PartyModel>> {
    (1..=parties)
        .map(|p| PartyModel::load(&run.join("model").join(format!("party{p}"))).with_context(|| format!("loading model of party {p}")))
        .collect()
}

fn secure_predict(cfg: &FederationConfig, models: &[PartyModel], data: &[Dataset]) -> Result<(Vec<Option<Predictions>>, TrafficStats)> {
    let net = Network::new(cfg.parties, NetworkConfig::default())?;
    let preds = federation::predict(cfg, &net, models, data)?;
    Ok((preds, net.stats()))
}

fn write_scores(path: &Path, scores: Option<&[f64]>) -> Result<()> {
    let mut text = String::from("score\n");
    for s in scores.unwrap_or(&[]) {
        text.push_str(&format!("{s}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let manifest: RunManifest = read_json(&a.run.join("manifest.json"))?;
    let mut cfg = manifest.config;
    if let Some(r) = a.reveal_to {
        cfg.reveal_predictions_to = match r {
            RevealArg::Ap => RevealTo::Ap,
            RevealArg::All => RevealTo::All,
        };
    }
    let data = load_split(&a.data, &a.split, cfg.active_party)?;
    let models = load_models(&a.run, cfg.parties)?;
    let (preds, _) = secure_predict(&cfg, &models, &data)?;
    let dir = a.run.join("predictions");
    fs::create_dir_all(&dir)?;
    for (i, p) in preds.iter().enumerate() {
        write_scores(&dir.join(format!("party{}.csv", i + 1)), p.as_ref().map(|p| p.scores.as_slice()))?;
    }
    println!("wrote predictions for {} rows to {}", data[0].rows(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    secure: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plaintext: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<Metrics>,
}

fn metric_delta(a: &Metrics, b: &Metrics) -> Metrics {
    let d = |x: Option<f64>, y: Option<f64>| x.zip(y).map(|(x, y)| x - y);
    Metrics { rmse: d(a.rmse, b.rmse), acc: d(a.acc, b.acc), auc: d(a.auc, b.auc) }
}

fn staged_metric(task: Task, scores: &[f64], y: &[f64]) -> Result<f64> {
    Ok(match task {
        Task::Regression => federation::rmse(scores, y)?,
        Task::Classification => 1.0 - federation::accuracy(scores, y)?,
    })
}

fn evaluate(run: &Path, data_dir: &Path, mode: Mode) -> Result<()> {
    let manifest: RunManifest = read_json(&run.join("manifest.json"))?;
    let cfg = manifest.config;
    let test = load_split(data_dir, "test", cfg.active_party)?;
    let labels = test[cfg.active_party - 1].labels.clone().context("active party test file has no labels")?;
    let mut report = EvalReport { task: cfg.task, secure: None, plaintext: None, delta: None };
    let mut secure_curve = None;
    let mut plain_curve = None;
    if mode != Mode::Plaintext {
        let models = load_models(run, cfg.parties)?;
        let (preds, _) = secure_predict(&cfg, &models, &test)?;
        let p = preds[cfg.active_party - 1].clone().context("active party received no predictions")?;
        report.secure = Some(federation::evaluate(cfg.task, &p.scores, &labels)?);
        secure_curve = Some(p.staged);
    }
    if mode != Mode::Secure {
        let train = load_split(data_dir, "train", cfg.active_party)?;
        let (_, p) = federation::plaintext_baseline(&cfg, &train, &test)?;
        report.plaintext = Some(federation::evaluate(cfg.task, &p.scores, &labels)?);
        plain_curve = Some(p.staged);
    }
    if let (Some(s), Some(p)) = (&report.secure, &report.plaintext) {
        report.delta = Some(metric_delta(s, p));
    }
    write_json(&run.join("metrics.json"), &report)?;
    let name = if cfg.task == Task::Regression { "rmse" } else { "error" };
    let mut csv = format!("round,secure_{name},plaintext_{name}\n");
    for t in 0..cfg.trees {
        let cell = |c: &Option<Vec<Vec<f64>>>| -> Result<String> {
            match c.as_ref().and_then(|c| c.get(t)) {
                Some(s) => Ok(format!("{}", staged_metric(cfg.task, s, &labels)?)),
                None => Ok(String::new()),
            }
        };
        csv.push_str(&format!("{},{},{}\n", t + 1, cell(&secure_curve)?, cell(&plain_curve)?));
    }
    fs::write(run.join("curves.csv"), csv)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    fs::create_dir_all(&a.out)?;
    let mut csv = String::from("samples,features,rounds,bytes,modeled_seconds,wall_seconds\n");
    for &n in &a.samples {
        let spec = SynthSpec { samples: n, features: a.features, informative: a.features, task: cfg.task, noise: 0.1, seed: cfg.seed };
        let parts = generate_synthetic(&spec)?.partition(cfg.parties)?;
        let net = Network::new(cfg.parties, NetworkConfig::default())?;
        let start = Instant::now();
        federation::train(&cfg, &net, &parts)?;
        let wall = start.elapsed().as_secs_f64();
        let s = net.stats();
        csv.push_str(&format!("{n},{},{},{},{},{wall}\n", a.features, s.totals.rounds, s.totals.bytes, s.modeled_seconds));
        println!("N={n}: {} rounds, {} bytes, modeled {:.1} s, wall {wall:.2} s", s.totals.rounds, s.totals.bytes, s.modeled_seconds);
    }
    fs::write(a.out.join("bench.csv"), csv)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::SplitDataset(a) => split_dataset(&a),
        Command::GenSynth(a) => gen_synth(&a),
        Command::Train(a) => train(&a).map(|_| ()),
        Command::Predict(a) => predict(&a),
        Command::Eval(a) => evaluate(&a.run, &a.data, a.mode),
        Command::Run(a) => {
            train(&a)?;
            if a.mode != Mode::Plaintext {
                predict(&PredictArgs { run: a.out.clone(), data: a.data.clone(), split: "test".into(), reveal_to: None })?;
            }
            evaluate(&a.out, &a.data, a.mode)
        }
        Command::Bench(a) => bench(&a),
    }
}
