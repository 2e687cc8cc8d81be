//! Experiment orchestration.
//!
//! A run is fully determined by an [`ExperimentConfig`] and a repetition
//! index: repetition `r` seeds its random streams with `base_seed + r`, using
//! ChaCha stream 0 for the policy and stream 1 for the environment.
//! Repetitions run in parallel and are aggregated with an order-independent
//! reduction.
//!
//! Configuration is TOML:
//!
//! ```toml
//! horizon = 20000
//! repetitions = 100
//! base_seed = 0
//!
//! [environment]
//! kind = "synthetic"        # synthetic | matrix | continuous
//! name = "1good"            # synthetic: 1good 2good 6good arith geom
//! link = "linear"           # linear | logit
//! # path = "prefs.csv"      # matrix
//! # grid_points = 30        # continuous (forrester, sixhump)
//!
//! [algorithm]
//! name = "ind_selfsparring" # kernel_selfsparring sparring multisparring gp_sparring
//! m = 4
//! mechanism = "all_pairs"   # all_pairs | winner_only | single_pair
//! eta = 1.0                 # default 3.5 when m = 2, else 1
//!
//! [output]
//! snapshot_interval = 50
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dueling::{
    play_round, DuelingPolicy, GpSparring, IndSelfSparring, KernelSelfSparring, RoundRecord,
    Sparring,
};
use crate::env::{FeedbackMechanism, LinkFunction, PreferenceEnvironment};
use crate::error::{Error, Result};
use crate::gp::{
    GpPosterior, GpSnapshot, Kernel, DEFAULT_BETA_SCALE, DEFAULT_LENGTHSCALE,
    DEFAULT_NOISE_VARIANCE,
};
use crate::mab::{BanditPolicy, Exp3State, ThompsonPolicy, Ucb1State, DEFAULT_EXP3_GAMMA};
use crate::RandomSource;

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Learning rate used by two-dueling runs when none is configured.
pub const DEFAULT_ETA_TWO_DUELING: f64 = 3.5;
/// Learning rate used by multi-dueling runs when none is configured.
pub const DEFAULT_ETA_MULTI_DUELING: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Synthetic { name: String, link: LinkFunction },
    Matrix { path: PathBuf },
    Continuous { name: String, grid_points: usize },
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<PreferenceEnvironment> {
        match self {
            EnvironmentSpec::Synthetic { name, link } => {
                PreferenceEnvironment::synthetic(name, *link)
            }
            EnvironmentSpec::Matrix { path } => PreferenceEnvironment::load_matrix(path),
            EnvironmentSpec::Continuous { name, grid_points } => {
                PreferenceEnvironment::continuous(name, *grid_points)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    IndSelfsparring,
    KernelSelfsparring,
    Sparring,
    Multisparring,
    GpSparring,
}

impl AlgorithmKind {
    pub fn is_kernelized(self) -> bool {
        matches!(
            self,
            AlgorithmKind::KernelSelfsparring | AlgorithmKind::GpSparring
        )
    }
}

/// Bandit policy used in each slot of `sparring` and `multisparring`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlotPolicy {
    #[default]
    Thompson,
    Ucb1,
    Exp3,
}

fn default_m() -> usize {
    2
}
fn default_mechanism() -> FeedbackMechanism {
    FeedbackMechanism::AllPairs
}
fn default_lengthscale() -> f64 {
    DEFAULT_LENGTHSCALE
}
fn default_noise_variance() -> f64 {
    DEFAULT_NOISE_VARIANCE
}
fn default_beta_scale() -> f64 {
    DEFAULT_BETA_SCALE
}
fn default_exp3_gamma() -> f64 {
    DEFAULT_EXP3_GAMMA
}
fn default_repetitions() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmKind,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_mechanism")]
    pub mechanism: FeedbackMechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    #[serde(default = "default_beta_scale")]
    pub beta_scale: f64,
    #[serde(default = "default_exp3_gamma")]
    pub exp3_gamma: f64,
    #[serde(default)]
    pub slot_policy: SlotPolicy,
}

impl AlgorithmConfig {
    pub fn new(name: AlgorithmKind, m: usize, mechanism: FeedbackMechanism) -> Self {
        AlgorithmConfig {
            name,
            m,
            mechanism,
            eta: None,
            lengthscale: DEFAULT_LENGTHSCALE,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            beta_scale: DEFAULT_BETA_SCALE,
            exp3_gamma: DEFAULT_EXP3_GAMMA,
            slot_policy: SlotPolicy::Thompson,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn effective_eta(&self) -> f64 {
        self.eta.unwrap_or(if self.m == 2 {
            DEFAULT_ETA_TWO_DUELING
        } else {
            DEFAULT_ETA_MULTI_DUELING
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Record a GP snapshot of repetition 0 every this many iterations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizon: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub environment: EnvironmentSpec,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn new(
        environment: EnvironmentSpec,
        algorithm: AlgorithmConfig,
        horizon: usize,
        repetitions: usize,
    ) -> Self {
        ExperimentConfig {
            horizon,
            repetitions,
            base_seed: 0,
            environment,
            algorithm,
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. A relative matrix path is resolved
    /// against the config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let EnvironmentSpec::Matrix { path: matrix } = &mut config.environment {
            if matrix.is_relative() {
                if let Some(dir) = path.parent() {
                    *matrix = dir.join(&*matrix);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serialisable")
    }

    /// Checks everything that can be checked without building the environment.
    pub fn validate(&self) -> Result<()> {
        let alg = &self.algorithm;
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if alg.m == 0 {
            return Err(Error::config("m must be at least 1"));
        }
        if !(alg.effective_eta() > 0.0) {
            return Err(Error::config("eta must be positive"));
        }
        if alg.name == AlgorithmKind::Sparring && alg.m != 2 {
            return Err(Error::config(
                "sparring plays exactly two arms; use multisparring for m != 2",
            ));
        }
        if alg.name.is_kernelized() {
            if !matches!(self.environment, EnvironmentSpec::Continuous { .. }) {
                return Err(Error::config(format!(
                    "{:?} needs a grid-bearing (continuous) environment",
                    alg.name
                )));
            }
            if !(alg.lengthscale > 0.0) || !(alg.noise_variance > 0.0) || !(alg.beta_scale >= 0.0) {
                return Err(Error::config(
                    "lengthscale and noise_variance must be positive, beta_scale nonnegative",
                ));
            }
        }
        if alg.slot_policy == SlotPolicy::Exp3 && !(alg.exp3_gamma > 0.0 && alg.exp3_gamma <= 1.0) {
            return Err(Error::config("exp3_gamma must lie in (0, 1]"));
        }
        if self.output.snapshot_interval == Some(0) {
            return Err(Error::config("snapshot_interval must be at least 1"));
        }
        Ok(())
    }

    pub fn build_environment(&self) -> Result<PreferenceEnvironment> {
        self.environment.build()
    }

    pub fn build_policy(
        &self,
        env: &PreferenceEnvironment,
    ) -> Result<Box<dyn DuelingPolicy + Send>> {
        let alg = &self.algorithm;
        let arms = env.num_arms();
        let m = alg.m;
        let gp_prior = || -> Result<GpPosterior> {
            let grid = env.grid().ok_or_else(|| {
                Error::config("kernelized algorithms need a grid-bearing environment")
            })?;
            let kernel = Kernel::squared_exponential(alg.lengthscale, grid[0].len());
            GpPosterior::new(kernel, alg.noise_variance, grid.to_vec())
        };
        Ok(match alg.name {
            AlgorithmKind::IndSelfsparring => {
                Box::new(IndSelfSparring::new(arms, m, alg.effective_eta()))
            }
            AlgorithmKind::KernelSelfsparring => Box::new(KernelSelfSparring::new(gp_prior()?, m)),
            AlgorithmKind::GpSparring => Box::new(GpSparring::new(gp_prior()?, m, alg.beta_scale)),
            AlgorithmKind::Sparring | AlgorithmKind::Multisparring => match alg.slot_policy {
                SlotPolicy::Thompson => {
                    sparring(m, || ThompsonPolicy::new(arms, alg.effective_eta()))
                }
                SlotPolicy::Ucb1 => sparring(m, || Ucb1State::new(arms)),
                SlotPolicy::Exp3 => sparring(m, || Exp3State::new(arms, alg.exp3_gamma)),
            },
        })
    }

    pub fn seed_for(&self, rep_index: usize) -> u64 {
        self.base_seed.wrapping_add(rep_index as u64)
    }
}

fn sparring<P, F>(m: usize, make: F) -> Box<dyn DuelingPolicy + Send>
where
    P: BanditPolicy + Send + 'static,
    F: Fn() -> P,
{
    Box::new(Sparring::new((0..m).map(|_| make()).collect()))
}

/// Policy and environment random streams for one repetition.
pub fn rng_pair(seed: u64) -> (RandomSource, RandomSource) {
    let policy = RandomSource::seed_from_u64(seed);
    let mut env = RandomSource::seed_from_u64(seed);
    env.set_stream(1);
    (policy, env)
}

/// Per-round and cumulative regret of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn from_instantaneous(instantaneous: Vec<f64>) -> Self {
        let cumulative = instantaneous
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        RegretTrace {
            instantaneous,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.instantaneous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instantaneous.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Per-iteration mean and (population) standard deviation of cumulative regret.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub repetitions: usize,
    pub config: ExperimentConfig,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub aggregate: AggregateResult,
    pub traces: Vec<RegretTrace>,
    pub snapshots: Vec<GpSnapshot>,
}

/// Runs one repetition, calling `observer` after every round.
pub fn run_single_observed<F>(
    config: &ExperimentConfig,
    env: &PreferenceEnvironment,
    rep_index: usize,
    mut observer: F,
) -> Result<RegretTrace>
where
    F: FnMut(&RoundRecord, &dyn DuelingPolicy) -> Result<()>,
{
    config.validate()?;
    let mut policy = config.build_policy(env)?;
    let (mut policy_rng, mut env_rng) = rng_pair(config.seed_for(rep_index));
    let mechanism = config.algorithm.mechanism;
    let mut regret = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        let record = play_round(
            &mut policy,
            env,
            mechanism,
            t,
            &mut policy_rng,
            &mut env_rng,
        )?;
        regret.push(record.regret);
        observer(&record, &*policy)?;
    }
    Ok(RegretTrace::from_instantaneous(regret))
}

/// One repetition; deterministic in `(config, rep_index)`.
pub fn run_single(config: &ExperimentConfig, rep_index: usize) -> Result<RegretTrace> {
    let env = config.build_environment()?;
    run_single_observed(config, &env, rep_index, |_, _| Ok(()))
}

fn snapshot_observer<'a>(
    interval: Option<usize>,
    truth: &'a Option<Vec<f64>>,
    sink: &'a mut Vec<GpSnapshot>,
) -> impl FnMut(&RoundRecord, &dyn DuelingPolicy) -> Result<()> + 'a {
    move |record, policy| {
        if let Some(every) = interval {
            if record.iteration % every == 0 {
                if let Some(snapshot) = policy.gp_snapshot(record.iteration, truth.clone()) {
                    sink.push(snapshot?);
                }
            }
        }
        Ok(())
    }
}

/// Runs every repetition (in parallel) and aggregates the cumulative regret.
pub fn run_experiment_full(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let env = config.build_environment()?;
    // Fail on incompatible pairings before any round runs.
    config.build_policy(&env)?;
    let truth = Some(env.preference_against_best());
    let interval = config.output.snapshot_interval;
    let results: Vec<(RegretTrace, Vec<GpSnapshot>)> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut snapshots = Vec::new();
            let trace = if rep == 0 {
                run_single_observed(
                    config,
                    &env,
                    rep,
                    snapshot_observer(interval, &truth, &mut snapshots),
                )?
            } else {
                run_single_observed(config, &env, rep, |_, _| Ok(()))?
            };
            Ok((trace, snapshots))
        })
        .collect::<Result<_>>()?;
    let (traces, snapshots): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let aggregate = aggregate(config, &traces);
    Ok(ExperimentOutput {
        aggregate,
        traces,
        snapshots: snapshots.into_iter().flatten().collect(),
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult> {
    Ok(run_experiment_full(config)?.aggregate)
}

/// Mean and population standard deviation of the cumulative traces at each
/// iteration. Values are sorted before summation, so the result does not
/// depend on the order of `traces`.
pub fn aggregate(config: &ExperimentConfig, traces: &[RegretTrace]) -> AggregateResult {
    let (mean, std) = mean_std(traces.iter().map(|t| t.cumulative.as_slice()));
    AggregateResult {
        mean,
        std,
        repetitions: traces.len(),
        config: config.clone(),
    }
}

/// Column-wise mean and population standard deviation of equal-length rows.
pub fn mean_std<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    let Some(len) = rows.first().map(|r| r.len()) else {
        return (Vec::new(), Vec::new());
    };
    assert!(
        rows.iter().all(|r| r.len() == len),
        "traces differ in length"
    );
    let n = rows.len() as f64;
    let mut column = Vec::with_capacity(rows.len());
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for t in 0..len {
        column.clear();
        column.extend(rows.iter().map(|r| r[t]));
        column.sort_by(f64::total_cmp);
        let mu = column.iter().sum::<f64>() / n;
        let var = column.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        mean.push(mu);
        std.push(var.sqrt());
    }
    (mean, std)
}

/// Writes the aggregate table, the config echo, optionally the
/// per-repetition cumulative traces, and any GP snapshots. Returns the paths
/// written.
pub fn emit_results(
    output: &ExperimentOutput,
    out_dir: impl AsRef<Path>,
    emit_traces: bool,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let path = out_dir.join(AGGREGATE_FILE);
    write_aggregate(&output.aggregate, &path)?;
    written.push(path);

    let path = out_dir.join(CONFIG_FILE);
    fs::write(&path, output.aggregate.config.to_toml_string()).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if emit_traces {
        let path = out_dir.join(TRACES_FILE);
        write_traces(&output.traces, &path)?;
        written.push(path);
    }

    if !output.snapshots.is_empty() {
        let dir = out_dir.join(SNAPSHOT_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for snapshot in &output.snapshots {
            let path = dir.join(format!("snapshot_{:06}.json", snapshot.iteration));
            let json =
                serde_json::to_string_pretty(snapshot).expect("snapshot is always serialisable");
            fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// `iteration,mean_cum_regret,std_cum_regret`, iterations starting at 1.
pub fn write_aggregate(result: &AggregateResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["iteration", "mean_cum_regret", "std_cum_regret"])
        .map_err(csv_err(path))?;
    for (t, (m, s)) in result.mean.iter().zip(&result.std).enumerate() {
        w.write_record([(t + 1).to_string(), m.to_string(), s.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `iteration,rep_0,rep_1,…` with cumulative regret per repetition.
pub fn write_traces(traces: &[RegretTrace], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["iteration".to_string()];
    header.extend((0..traces.len()).map(|r| format!("rep_{r}")));
    w.write_record(&header).map_err(csv_err(path))?;
    let len = traces.first().map_or(0, RegretTrace::len);
    for t in 0..len {
        let mut row = vec![(t + 1).to_string()];
        row.extend(traces.iter().map(|tr| tr.cumulative[t].to_string()));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_numeric_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_err(path))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::config(format!("{}: '{f}' is not a number", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads an aggregate table back as `(mean, std)`.
pub fn read_aggregate(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (_, rows) = read_numeric_table(path.as_ref())?;
    Ok(rows.iter().map(|r| (r[1], r[2])).unzip())
}

/// Reads a traces table back as one cumulative vector per repetition.
pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_numeric_table(path.as_ref())?;
    Ok((1..header.len())
        .map(|c| rows.iter().map(|r| r[c]).collect())
        .collect())
}
