//! Synchronous parameter-server training: honest workers sample, clip and
//! (optionally) noise their gradients, Byzantine workers submit a forged
//! vector, the server aggregates and applies a momentum SGD step.
//!
//! Worker `i` draws all of its randomness from stream `i` of the run's master
//! seed, so results do not depend on scheduling.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::analyzer::vn_ratio_of;
use crate::attack::{forge, AttackSpec, AttackView};
use crate::dataset::{self, load_sparse, phishing_surrogate, sample_batch, Dataset};
use crate::gar::{aggregate, GarKind, GarSpec};
use crate::model::{accuracy, clipped_mean_with_loss, ClipConfig, ModelParams};
use crate::numerics::{streams, GradientVector, RandomStream};
use crate::privacy::{calibrate, sanitize, NoiseCalibration, PrivacyBudget};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub workers: usize,
    /// Byzantine workers occupy ids `workers − byzantine .. workers`.
    pub byzantine: usize,
}

impl Default for Topology {
    fn default() -> Self {
        Topology { workers: 11, byzantine: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentumSite {
    /// One buffer on the aggregated gradient.
    #[default]
    Server,
    /// One buffer per honest worker, applied before noise.
    Worker,
}

impl MomentumSite {
    pub fn name(&self) -> &'static str {
        match self {
            MomentumSite::Server => "server",
            MomentumSite::Worker => "worker",
        }
    }
}

impl FromStr for MomentumSite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "server" => Ok(MomentumSite::Server),
            "worker" => Ok(MomentumSite::Worker),
            other => Err(Error::param(format!("unknown momentum site `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub steps: usize,
    pub learning_rate: f64,
    /// In `[0, 1)`.
    pub momentum: f64,
    pub momentum_site: MomentumSite,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            steps: 1000,
            learning_rate: 2.0,
            momentum: 0.99,
            momentum_site: MomentumSite::Server,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DataSource {
    /// The built-in synthetic stand-in for the phishing dataset.
    Surrogate { seed: u64 },
    /// A sparse SVM-light file; `feature_count` fixes the width.
    File { path: PathBuf, feature_count: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataConfig {
    pub source: DataSource,
    pub train_count: usize,
    /// Seed of the train/test shuffle, independent of the run seed.
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Surrogate { seed: 1 },
            train_count: dataset::PHISHING_TRAIN,
            split_seed: 1,
        }
    }
}

/// A loaded train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub train: Dataset,
    pub test: Dataset,
}

impl TrainingData {
    pub fn load(cfg: &DataConfig) -> Result<Self> {
        let full = match &cfg.source {
            DataSource::Surrogate { seed } => phishing_surrogate(*seed),
            DataSource::File { path, feature_count } => load_sparse(path, *feature_count)?,
        };
        let mut stream = RandomStream::new(cfg.split_seed, streams::SPLIT);
        let (train, test) = dataset::split(&full, cfg.train_count, &mut stream)?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::config("data.train", "split leaves an empty train or test set"));
        }
        Ok(TrainingData { train, test })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub gar: GarKind,
    pub attack: AttackSpec,
    pub attack_view: AttackView,
    /// `None` disables privacy noise.
    pub budget: Option<PrivacyBudget>,
    pub clip: ClipConfig,
    pub data: DataConfig,
    pub master_seed: u64,
    pub eval_every: usize,
    pub track_vn: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: Topology::default(),
            schedule: Schedule::default(),
            batch_size: 50,
            gar: GarKind::Mda,
            attack: AttackSpec::none(),
            attack_view: AttackView::PostNoise,
            budget: None,
            clip: ClipConfig::new(1e-2).expect("positive"),
            data: DataConfig::default(),
            master_seed: 1,
            eval_every: 50,
            track_vn: false,
        }
    }
}

impl ExperimentConfig {
    pub fn gar_spec(&self) -> GarSpec {
        GarSpec::new(self.gar, self.topology.workers, self.topology.byzantine)
    }

    /// Number of workers that follow the protocol.
    pub fn honest_count(&self) -> usize {
        if self.attack.is_active() {
            self.topology.workers - self.topology.byzantine
        } else {
            self.topology.workers
        }
    }

    /// `nodp-none`, `dp-alie`, ...
    pub fn scenario(&self) -> String {
        let dp = if self.budget.is_some() { "dp" } else { "nodp" };
        format!("{dp}-{}", self.attack.kind.name())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if t.workers == 0 {
            return Err(Error::config("topology.n", "must be positive"));
        }
        if t.byzantine > t.workers {
            return Err(Error::config("topology.f", "must not exceed n"));
        }
        if self.attack.is_active() && t.byzantine == t.workers {
            return Err(Error::config("topology.f", "an attack needs at least one honest worker"));
        }
        self.gar_spec().check()?;
        let s = &self.schedule;
        if s.steps == 0 {
            return Err(Error::config("schedule.steps", "must be positive"));
        }
        if !(s.learning_rate.is_finite() && s.learning_rate > 0.0) {
            return Err(Error::config("schedule.learning_rate", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&s.momentum) {
            return Err(Error::config("schedule.momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch", "must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("training.eval_every", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSeries {
    /// Loss at `w_t` on the union of the honest batches of step `t`.
    pub train_loss: Vec<f64>,
    /// `(step, test accuracy)` at steps `0, e, 2e, …, ≤ T`.
    pub accuracy: Vec<(usize, f64)>,
    /// Empirical VN ratio of the honest submissions, per step, when tracked.
    pub vn_estimate: Option<Vec<f64>>,
    /// Step at which non-finite parameters appeared.
    pub diverged_at: Option<usize>,
}

impl MetricsSeries {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.train_loss.last().copied()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.accuracy.last().map(|&(_, a)| a)
    }
}

struct Worker {
    stream: RandomStream,
    momentum: GradientVector,
}

/// A training run that can be advanced one step at a time. `D` is any owner
/// or borrow of the data.
pub struct Simulation<D: Borrow<TrainingData>> {
    config: ExperimentConfig,
    spec: GarSpec,
    data: D,
    calibration: Option<NoiseCalibration>,
    params: ModelParams,
    server_momentum: GradientVector,
    workers: Vec<Worker>,
    step: usize,
    metrics: MetricsSeries,
}

impl<D: Borrow<TrainingData>> Simulation<D> {
    pub fn new(config: ExperimentConfig, data: D) -> Result<Self> {
        config.validate()?;
        let loaded = data.borrow();
        let feature_count = loaded.train.feature_count();
        if loaded.test.feature_count() != feature_count {
            return Err(Error::param("train and test sets differ in width"));
        }
        let calibration = config
            .budget
            .map(|b| calibrate(&b, config.clip.g_max(), config.batch_size))
            .transpose()?;
        let params = ModelParams::zeros(feature_count);
        let dim = params.dim();
        let workers = (0..config.honest_count())
            .map(|i| Worker {
                stream: RandomStream::new(config.master_seed, i as u64),
                momentum: GradientVector::zeros(dim),
            })
            .collect();
        let metrics = MetricsSeries {
            vn_estimate: config.track_vn.then(Vec::new),
            ..MetricsSeries::default()
        };
        Ok(Simulation {
            spec: config.gar_spec(),
            config,
            data,
            calibration,
            params,
            server_momentum: GradientVector::zeros(dim),
            workers,
            step: 0,
            metrics,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn metrics(&self) -> &MetricsSeries {
        &self.metrics
    }

    pub fn into_metrics(self) -> MetricsSeries {
        self.metrics
    }

    /// Steps completed so far.
    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn honest_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn calibration(&self) -> Option<&NoiseCalibration> {
        self.calibration.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.schedule.steps || self.metrics.diverged()
    }

    pub fn data(&self) -> &TrainingData {
        self.data.borrow()
    }

    fn evaluate(&mut self) -> Result<()> {
        let acc = accuracy(&self.params, &self.data.borrow().test)?;
        self.metrics.accuracy.push((self.step, acc));
        Ok(())
    }

    /// Runs one synchronous step. Returns `false` once the run is over.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        let t = self.step;
        if t.is_multiple_of(self.config.eval_every) {
            self.evaluate()?;
        }

        let sched = self.config.schedule;
        let worker_momentum = sched.momentum_site == MomentumSite::Worker;
        let mut pre_noise = Vec::with_capacity(self.workers.len());
        let mut reports = Vec::with_capacity(self.config.topology.workers);
        let mut loss_sum = 0.0;
        for w in &mut self.workers {
            let batch = sample_batch(&self.data.borrow().train, self.config.batch_size, &mut w.stream)?;
            let (g, loss) = clipped_mean_with_loss(&self.params, batch.samples.iter().copied(), &self.config.clip)?;
            loss_sum += loss;
            let submitted = if worker_momentum {
                w.momentum = w.momentum.scale(sched.momentum).add(&g);
                w.momentum.clone()
            } else {
                g
            };
            let report = match &self.calibration {
                Some(cal) => sanitize(&submitted, cal, &mut w.stream)?,
                None => submitted.clone(),
            };
            pre_noise.push(submitted);
            reports.push(report);
        }
        // Equal batch sizes make the mean of per-batch losses the union loss.
        let loss = loss_sum / self.workers.len() as f64;

        if let Some(vn) = self.metrics.vn_estimate.as_mut() {
            vn.push(if reports.len() >= 2 { vn_ratio_of(&reports)?.ratio } else { f64::NAN });
        }

        if self.config.attack.is_active() {
            let observed = match self.config.attack_view {
                AttackView::PostNoise => &reports,
                AttackView::PreNoise => &pre_noise,
            };
            let forged = forge(&self.config.attack, observed)?;
            reports.extend(std::iter::repeat_n(forged, self.config.topology.byzantine));
        }

        let aggregated = aggregate(&self.spec, &reports)?;
        let direction = if worker_momentum {
            aggregated
        } else {
            self.server_momentum = self.server_momentum.scale(sched.momentum).add(&aggregated);
            self.server_momentum.clone()
        };
        self.params.step(-sched.learning_rate, &direction);
        self.metrics.train_loss.push(loss);
        self.step += 1;

        if !self.params.is_finite() || !loss.is_finite() {
            self.metrics.diverged_at = Some(t);
            return Ok(false);
        }
        if self.step == sched.steps && self.step.is_multiple_of(self.config.eval_every) {
            self.evaluate()?;
        }
        Ok(!self.is_finished())
    }

    pub fn run_to_end(mut self) -> Result<MetricsSeries> {
        while self.step()? {}
        Ok(self.metrics)
    }
}

/// Loads the data and runs the configuration to completion.
pub fn run(config: &ExperimentConfig) -> Result<MetricsSeries> {
    config.validate()?;
    let data = TrainingData::load(&config.data)?;
    run_on(config, &data)
}

/// Runs the configuration on already loaded data.
pub fn run_on(config: &ExperimentConfig, data: &TrainingData) -> Result<MetricsSeries> {
    Simulation::new(config.clone(), data)?.run_to_end()
}

/// Per-step mean and population standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedSummary {
    pub runs: usize,
    pub loss_mean: Vec<f64>,
    pub loss_std: Vec<f64>,
    pub accuracy_steps: Vec<usize>,
    pub accuracy_mean: Vec<f64>,
    pub accuracy_std: Vec<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SeedSummary {
    /// Summarizes completed, non-diverged series over their common prefix.
    pub fn of<'a, I>(series: I) -> Option<SeedSummary>
    where
        I: IntoIterator<Item = &'a MetricsSeries>,
    {
        let ok: Vec<&MetricsSeries> = series.into_iter().filter(|s| !s.diverged()).collect();
        if ok.is_empty() {
            return None;
        }
        let steps = ok.iter().map(|s| s.train_loss.len()).min()?;
        let evals = ok.iter().map(|s| s.accuracy.len()).min()?;
        let mut out = SeedSummary {
            runs: ok.len(),
            ..SeedSummary::default()
        };
        for t in 0..steps {
            let col: Vec<f64> = ok.iter().map(|s| s.train_loss[t]).collect();
            let (m, s) = mean_std(&col);
            out.loss_mean.push(m);
            out.loss_std.push(s);
        }
        for e in 0..evals {
            let col: Vec<f64> = ok.iter().map(|s| s.accuracy[e].1).collect();
            let (m, s) = mean_std(&col);
            out.accuracy_steps.push(ok[0].accuracy[e].0);
            out.accuracy_mean.push(m);
            out.accuracy_std.push(s);
        }
        Some(out)
    }
}

#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: Result<MetricsSeries>,
}

#[derive(Debug)]
pub struct GridCell {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub summary: Option<SeedSummary>,
}

impl GridCell {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|r| r.outcome.is_err())
    }
}

/// Runs every `(config, seed)` pair in parallel. Each seed replaces the
/// config's master seed. Per-run errors are kept in their cell.
pub fn run_grid(configs: &[ExperimentConfig], seeds: &[u64]) -> Result<Vec<GridCell>> {
    if seeds.is_empty() {
        return Err(Error::param("the seed list is empty"));
    }
    let mut cache: HashMap<&DataConfig, std::result::Result<TrainingData, String>> = HashMap::new();
    for c in configs {
        cache
            .entry(&c.data)
            .or_insert_with(|| TrainingData::load(&c.data).map_err(|e| e.to_string()));
    }

    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let mut outcomes: Vec<Option<Result<MetricsSeries>>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = ExperimentConfig {
                master_seed: seed,
                ..configs[c].clone()
            };
            let data = cache[&configs[c].data]
                .as_ref()
                .map_err(|e| Error::State(format!("data unavailable: {e}")))?;
            run_on(&cfg, data)
        })
        .map(Some)
        .collect();

    let mut cells = Vec::with_capacity(configs.len());
    for (c, cfg) in configs.iter().enumerate() {
        let runs: Vec<SeedRun> = seeds
            .iter()
            .enumerate()
            .map(|(k, &seed)| SeedRun {
                seed,
                outcome: outcomes[c * seeds.len() + k].take().expect("each job visited once"),
            })
            .collect();
        let summary = SeedSummary::of(runs.iter().filter_map(|r| r.outcome.as_ref().ok()));
        cells.push(GridCell {
            config: cfg.clone(),
            runs,
            summary,
        });
    }
    Ok(cells)
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let eps = self.budget.map_or("inf".to_string(), |b| b.epsilon().to_string());
        write!(
            f,
            "{} eps={} b={} gar={} n={} f={}",
            self.scenario(),
            eps,
            self.batch_size,
            self.gar,
            self.topology.workers,
            self.topology.byzantine
        )
    }
}
