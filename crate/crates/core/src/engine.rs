//! Runs the federated training loop: honest gradients, attack, robust
//! aggregation and the server update, with periodic evaluation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationRule;
use crate::attack::{apply_attack, honest_mean, AttackKind};
use crate::data::{
    load_covtype, load_mnist, partition_uniform, sample_minibatch, stratified_split, synth_dataset,
    Dataset, SplitSpec, SyntheticKind, WorkerShard, COVTYPE_NUMERIC_COLUMNS,
};
use crate::error::{Error, Result};
use crate::model::{dataset_metrics, init_params_with, loss_grad, LabelKind, ModelParams, ModelShape};
use crate::optimizer::ServerState;
use crate::rng::{self, RngStream, SetupPurpose};
use crate::vector::GradVector;

/// Size of the training subset used for the reported train loss.
pub const TRAIN_PROBE_SIZE: usize = 10_000;
pub const DATA_DIR_ENV: &str = "BYRD_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Nesterov,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Nesterov => "nesterov",
        }
    }
}

/// Model family; the exact shape follows from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic {
        #[serde(default = "default_rho")]
        rho: f64,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
}

fn default_rho() -> f64 {
    0.01
}

fn default_hidden() -> usize {
    32
}

impl ModelSpec {
    pub fn rho(&self) -> f64 {
        match *self {
            ModelSpec::Logistic { rho } => rho,
            ModelSpec::Mlp { .. } => 0.0,
        }
    }

    pub fn shape_for(&self, ds: &Dataset) -> Result<ModelShape> {
        let (shape, needs) = match *self {
            ModelSpec::Logistic { .. } => {
                (ModelShape::Logistic { features: ds.feature_dim() }, LabelKind::Binary)
            }
            ModelSpec::Mlp { hidden } => (
                ModelShape::Mlp { input: ds.feature_dim(), hidden, output: 10 },
                LabelKind::Class10,
            ),
        };
        if ds.label_kind() != needs {
            return Err(Error::LabelMismatch(format!(
                "{self:?} needs {needs:?} labels, dataset has {:?}",
                ds.label_kind()
            )));
        }
        Ok(shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Stratified split of the full file. Relative paths resolve against the
    /// data root.
    Covtype {
        #[serde(default = "default_covtype_path")]
        path: PathBuf,
        #[serde(default)]
        minmax: bool,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    /// The official train/test files; the limits keep the first `n` samples.
    Mnist {
        #[serde(default = "default_mnist_dir")]
        dir: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
    Synthetic {
        family: SyntheticKind,
        n: usize,
        dim: usize,
        #[serde(default)]
        data_seed: u64,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
}

fn default_covtype_path() -> PathBuf {
    PathBuf::from("covtype/covtype.data")
}

fn default_mnist_dir() -> PathBuf {
    PathBuf::from("mnist")
}

fn default_train_fraction() -> f64 {
    0.8
}

/// `$BYRD_DATA_DIR`, or `data` relative to the working directory.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        data_root().join(path)
    }
}

/// `path` itself, or `path.gz` when only the compressed file exists.
fn existing(path: PathBuf) -> PathBuf {
    if path.exists() {
        return path;
    }
    let mut gz = path.clone().into_os_string();
    gz.push(".gz");
    let gz = PathBuf::from(gz);
    if gz.exists() {
        gz
    } else {
        path
    }
}

#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
}

impl DatasetSpec {
    /// Whether the train/test split depends on the run seed.
    fn seed_dependent(&self) -> bool {
        !matches!(self, DatasetSpec::Mnist { .. })
    }

    fn cache_key(&self, seed: u64) -> String {
        let seed = if self.seed_dependent() { seed } else { 0 };
        format!("{self:?}#{seed}")
    }

    pub fn load(&self, seed: u64) -> Result<SplitData> {
        match self {
            DatasetSpec::Covtype { path, minmax, train_fraction } => {
                let mut ds = load_covtype(existing(resolve(path)))?;
                if *minmax {
                    ds.minmax_scale_columns(0..COVTYPE_NUMERIC_COLUMNS);
                }
                let (train, test) =
                    stratified_split(&ds, &SplitSpec { train_fraction: *train_fraction, seed })?;
                Ok(SplitData { train, test })
            }
            DatasetSpec::Mnist { dir, train_limit, test_limit } => {
                let dir = resolve(dir);
                let load = |images: &str, labels: &str, limit: &Option<usize>| -> Result<Dataset> {
                    let ds = load_mnist(existing(dir.join(images)), existing(dir.join(labels)))?;
                    match limit {
                        Some(n) => ds.head(*n),
                        None => Ok(ds),
                    }
                };
                Ok(SplitData {
                    train: load("train-images-idx3-ubyte", "train-labels-idx1-ubyte", train_limit)?,
                    test: load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", test_limit)?,
                })
            }
            DatasetSpec::Synthetic { family, n, dim, data_seed, train_fraction } => {
                let ds = synth_dataset(*family, *n, *dim, *data_seed)?;
                let (train, test) =
                    stratified_split(&ds, &SplitSpec { train_fraction: *train_fraction, seed })?;
                Ok(SplitData { train, test })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_workers: usize,
    pub byz_ratio: f64,
    pub iterations: usize,
    pub eta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    pub rule: AggregationRule,
    pub attack: AttackKind,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    pub model: ModelSpec,
    pub dataset: DatasetSpec,
}

fn default_beta() -> f64 {
    0.9
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Nesterov
}

fn default_eval_every() -> usize {
    50
}

impl RunConfig {
    /// `round(byz_ratio * n_workers)`.
    pub fn byzantine_count(&self) -> usize {
        (self.byz_ratio * self.n_workers as f64).round() as usize
    }

    pub fn honest_count(&self) -> usize {
        self.n_workers.saturating_sub(self.byzantine_count())
    }

    /// Momentum actually applied: zero for the SGD baseline.
    pub fn effective_beta(&self) -> f64 {
        match self.optimizer {
            OptimizerKind::Sgd => 0.0,
            OptimizerKind::Nesterov => self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_workers == 0 {
            return bad("n_workers must be >= 1".into());
        }
        if !(self.byz_ratio >= 0.0 && self.byz_ratio.is_finite()) {
            return bad(format!("byz_ratio must be >= 0, got {}", self.byz_ratio));
        }
        let (n, h) = (self.n_workers, self.honest_count());
        if self.byzantine_count() > n || 2 * h <= n {
            return bad(format!(
                "byz_ratio {} gives {} Byzantine of N = {n} workers (H = {h}); \
                 requires H > N/2",
                self.byz_ratio,
                self.byzantine_count(),
            ));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta must be in [0, 1), got {}", self.beta));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if let ModelSpec::Logistic { rho } = self.model {
            if !(rho >= 0.0 && rho.is_finite()) {
                return bad(format!("rho must be >= 0, got {rho}"));
            }
        }
        if let ModelSpec::Mlp { hidden: 0 } = self.model {
            return bad("hidden must be >= 1".into());
        }
        self.rule.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.attack.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let AggregationRule::Krum { f } = self.rule {
            let f = f.unwrap_or(self.byzantine_count());
            if n < f + 3 {
                return bad(format!("krum with f = {f} needs N >= f + 3, got N = {n}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundReport {
    pub k: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// Norm of the honest mean gradient.
    pub grad_norm: f64,
    /// Norm of the aggregated gradient.
    pub agg_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_acc: f64,
    pub best_acc: f64,
    pub final_loss: f64,
    pub wall_time: Duration,
    pub config_echo: RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub reports: Vec<RoundReport>,
    pub final_params: ModelParams,
}

/// Mean test loss and top-1 accuracy.
pub fn evaluate(p: &ModelParams, test: &Dataset, rho: f64) -> Result<(f64, f64)> {
    dataset_metrics(p, test, rho)
}

pub fn run_training(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let data = cfg.dataset.load(cfg.seed)?;
    run_training_on(cfg, &data)
}

struct Worker {
    shard: WorkerShard,
    rng: RngStream,
}

fn probe_subset(train: &Dataset, seed: u64) -> Result<Dataset> {
    if train.len() <= TRAIN_PROBE_SIZE {
        return Ok(train.clone());
    }
    let mut rng = rng::setup_stream(seed, SetupPurpose::Probe);
    let mut idx = index::sample(&mut rng, train.len(), TRAIN_PROBE_SIZE).into_vec();
    idx.sort_unstable();
    train.subset(&idx)
}

/// Runs `cfg` on already loaded data.
pub fn run_training_on(cfg: &RunConfig, data: &SplitData) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let shape = cfg.model.shape_for(&data.train)?;
    if data.test.feature_dim() != data.train.feature_dim()
        || data.test.label_kind() != data.train.label_kind()
    {
        return Err(Error::invalid("train and test sets disagree on features or labels"));
    }
    let rho = cfg.model.rho();
    let byz = cfg.byzantine_count();
    // Without an attack every worker is honest and holds a shard.
    let (honest, crafted) = if cfg.attack.is_attack() { (cfg.honest_count(), byz) } else { (cfg.n_workers, 0) };
    let mut workers: Vec<Worker> = partition_uniform(data.train.len(), honest, cfg.seed)?
        .into_iter()
        .map(|shard| {
            let rng = rng::worker_stream(cfg.seed, shard.worker_id);
            Worker { shard, rng }
        })
        .collect();
    let mut attack_rng = rng::attack_stream(cfg.seed);
    let x0 = init_params_with(shape, &mut rng::setup_stream(cfg.seed, SetupPurpose::Init))?;
    let mut state = ServerState::new(x0, cfg.eta, cfg.effective_beta())?;
    let probe = probe_subset(&data.train, cfg.seed)?;

    let fail = |round: usize, msg: String| Error::Training { round, msg };
    let mut reports = Vec::new();
    for k in 0..cfg.iterations {
        let x = &state.x;
        let grads: Vec<Result<GradVector>> = workers
            .par_iter_mut()
            .map(|w| {
                let batch = sample_minibatch(&data.train, &w.shard, cfg.batch_size, &mut w.rng)?;
                let (loss, g) = loss_grad(x, &batch, rho)?;
                if !loss.is_finite() || !g.is_finite() {
                    return Err(Error::NonFinite(format!("worker {} gradient", w.shard.worker_id)));
                }
                Ok(g)
            })
            .collect();
        let grads: Vec<GradVector> =
            grads.into_iter().collect::<Result<_>>().map_err(|e| fail(k, e.to_string()))?;
        let uploads = apply_attack(&cfg.attack, &grads, crafted, &mut attack_rng)
            .map_err(|e| fail(k, e.to_string()))?;
        let agg = cfg.rule.aggregate(&uploads, byz).map_err(|e| fail(k, e.to_string()))?;
        state.step(&agg).map_err(|e| fail(k, e.to_string()))?;

        if k % cfg.eval_every == 0 || k + 1 == cfg.iterations {
            let grad_norm = honest_mean(&grads).map_err(|e| fail(k, e.to_string()))?.norm();
            let (train_loss, _) = evaluate(&state.x, &probe, rho)?;
            let (test_loss, test_acc) = evaluate(&state.x, &data.test, rho)?;
            if !train_loss.is_finite() || !test_loss.is_finite() {
                return Err(fail(k, format!("non-finite loss (train {train_loss}, test {test_loss})")));
            }
            reports.push(RoundReport { k, train_loss, test_loss, test_acc, grad_norm, agg_norm: agg.norm() });
        }
    }

    let last = *reports.last().expect("the final round is always evaluated");
    let best_acc = reports.iter().map(|r| r.test_acc).fold(f64::NEG_INFINITY, f64::max);
    Ok(RunResult {
        summary: RunSummary {
            final_acc: last.test_acc,
            best_acc,
            final_loss: last.test_loss,
            wall_time: started.elapsed(),
            config_echo: cfg.clone(),
        },
        reports,
        final_params: state.x,
    })
}

/// Runs every config on a pool of `jobs` threads (0 = rayon default).
/// Datasets are loaded once per distinct (spec, split seed) and shared.
/// Results come back in input order; a failing config does not stop the rest.
pub fn run_matrix(cfgs: &[RunConfig], jobs: usize) -> Result<Vec<Result<RunResult>>> {
    if cfgs.is_empty() {
        return Err(Error::Empty("run matrix"));
    }
    let mut cache: HashMap<String, std::result::Result<Arc<SplitData>, String>> = HashMap::new();
    for cfg in cfgs {
        let key = cfg.dataset.cache_key(cfg.seed);
        cache
            .entry(key)
            .or_insert_with(|| cfg.dataset.load(cfg.seed).map(Arc::new).map_err(|e| e.to_string()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    Ok(pool.install(|| {
        cfgs.par_iter()
            .map(|cfg| match &cache[&cfg.dataset.cache_key(cfg.seed)] {
                Ok(data) => run_training_on(cfg, data),
                Err(msg) => Err(Error::Config(format!("dataset: {msg}"))),
            })
            .collect()
    }))
}
