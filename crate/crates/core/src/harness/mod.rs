//! Experiment orchestration and reporting: budget sweeps over attack
//! fractions and seeds, pre/post-attack tables, ratio curves, basic-partition
//! balance histograms, KS comparisons, and report emission.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{
    attack_fairness, random_attack, AttackError, AttackProblem, AttackResult, TargetMetric,
};
use crate::cfc::{
    run_cfc, BasicPartitionSet, CfcError, CfcPipelineConfig, CoAssociationMatrix,
};
use crate::clusterers::{fair_cluster, ClusterError, ClustererConfig};
use crate::data::{
    load_dataset, make_gaussian_blobs, make_toy_dataset, merge_groups, restrict, restrict_labels,
    split_attack_set, AttackSplit, BlobSpec, Clustering, CsvSchema, DataError, Dataset, GroupRule,
};
use crate::metrics::{acc, balance, entropy, ks_statistic, nmi, MetricError};
use crate::rng::derive_seed;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "FAIRKIT_OUT_DIR";

/// The default output directory: `$FAIRKIT_OUT_DIR` or `./fairkit-out`.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fairkit-out"))
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Cfc(#[from] CfcError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("reports do not align: {0}")]
    Mismatch(String),
}

/// The clustering algorithm an experiment evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    FairCluster,
    Cfc,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::FairCluster => write!(f, "fair_cluster"),
            Algorithm::Cfc => write!(f, "cfc"),
        }
    }
}

/// Which attack (if any) perturbs the adversary-controlled group labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Optimized,
    Random,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackKind::None => write!(f, "none"),
            AttackKind::Optimized => write!(f, "optimized"),
            AttackKind::Random => write!(f, "random"),
        }
    }
}

/// Where the experiment dataset comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    /// A feature CSV with a `group` column and optional `label` column.
    Csv(PathBuf),
    /// The built-in 20-sample toy instance.
    Toy { seed: u64 },
    /// Two Gaussian blobs with alternating protected groups, `n` samples.
    Synthetic { n: usize, seed: u64 },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset, HarnessError> {
        match self {
            DatasetSource::Csv(path) => Ok(load_dataset(path, &CsvSchema::default())?.0),
            DatasetSource::Toy { seed } => Ok(make_toy_dataset(*seed).0),
            DatasetSource::Synthetic { n, seed } => {
                if *n < 8 || n % 2 != 0 {
                    return Err(HarnessError::BadConfig(
                        "synthetic dataset needs an even n >= 8".into(),
                    ));
                }
                // Even per-blob counts keep the two groups exactly equal.
                let mut first = n / 2;
                if first % 2 != 0 {
                    first += 1;
                }
                Ok(make_gaussian_blobs(&BlobSpec {
                    centers: vec![vec![0.0, 0.0], vec![4.0, 0.0]],
                    std: 0.6,
                    counts: vec![first, n - first],
                    group_rule: GroupRule::AlternatingWithinBlob,
                    seed: *seed,
                })?)
            }
        }
    }
}

/// Full description of one experiment sweep.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub algorithm: Algorithm,
    pub attack: AttackKind,
    /// Attacked fractions of the sample set, each in [0, 1].
    pub budget_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub target_metric: TargetMetric,
    /// Oracle query budget per optimized attack.
    pub query_budget: usize,
    pub fairlet_p: usize,
    pub fairlet_q: usize,
    /// Defense settings; `cfc.hyper.k` is kept in sync with `k`.
    pub cfc: CfcPipelineConfig,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            algorithm: Algorithm::FairCluster,
            attack: AttackKind::Optimized,
            budget_fractions: (0..=6).map(|i| i as f64 * 0.05).collect(),
            seeds: (0..10).collect(),
            k: 2,
            target_metric: TargetMetric::Balance,
            query_budget: 1000,
            fairlet_p: 2,
            fairlet_q: 5,
            cfc: CfcPipelineConfig::new(2),
            output_dir: default_output_dir(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::BadConfig("need at least one seed".into()));
        }
        if self.budget_fractions.is_empty() {
            return Err(HarnessError::BadConfig("need at least one fraction".into()));
        }
        if self
            .budget_fractions
            .iter()
            .any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(HarnessError::BadConfig(
                "fractions must lie in [0, 1]".into(),
            ));
        }
        if self.k == 0 {
            return Err(HarnessError::BadConfig("k must be positive".into()));
        }
        if self.fairlet_p == 0 || self.fairlet_q < self.fairlet_p {
            return Err(HarnessError::BadConfig(
                "fairlet ratio needs 1 <= p <= q".into(),
            ));
        }
        if self.query_budget == 0 {
            return Err(HarnessError::BadConfig(
                "query budget must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Parses the plain-text key/value config format (`key = value`, `#`
    /// comments). Recognized keys:
    ///
    /// `dataset` (`toy:SEED`, `csv:PATH`, `synthetic:N:SEED`), `algorithm`
    /// (`fair`|`cfc`), `attack` (`none`|`optimized`|`random`), `fractions`
    /// (comma list), `seeds` (comma list), `k`, `metric`
    /// (`balance`|`entropy`), `budget`, `fairlet_p`, `fairlet_q`,
    /// `output_dir`, and the defense knobs `cfc_partitions`,
    /// `cfc_row_fraction`, `cfc_col_fraction`, `cfc_hidden`, `cfc_embed`,
    /// `cfc_hops`, `cfc_alpha`, `cfc_beta`, `cfc_tau`, `cfc_dropout`,
    /// `cfc_epochs`, `cfc_lr`.
    pub fn from_key_values(text: &str) -> Result<Self, HarnessError> {
        let bad = |msg: String| HarnessError::BadConfig(msg);
        let mut config = ExperimentConfig::new(DatasetSource::Toy { seed: 0 });
        let mut saw_dataset = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let parse_num = |what: &str| -> Result<f64, HarnessError> {
                value
                    .parse::<f64>()
                    .map_err(|_| bad(format!("{what}: not a number: {value}")))
            };
            let parse_int = |what: &str| -> Result<usize, HarnessError> {
                value
                    .parse::<usize>()
                    .map_err(|_| bad(format!("{what}: not an integer: {value}")))
            };
            match key {
                "dataset" => {
                    saw_dataset = true;
                    let mut parts = value.splitn(2, ':');
                    let kind = parts.next().unwrap_or("");
                    let rest = parts.next().unwrap_or("");
                    config.dataset = match kind {
                        "toy" => DatasetSource::Toy {
                            seed: rest
                                .parse()
                                .map_err(|_| bad(format!("toy seed: {rest}")))?,
                        },
                        "csv" => DatasetSource::Csv(PathBuf::from(rest)),
                        "synthetic" => {
                            let (n, seed) = rest
                                .split_once(':')
                                .ok_or_else(|| bad("synthetic wants N:SEED".into()))?;
                            DatasetSource::Synthetic {
                                n: n.parse().map_err(|_| bad(format!("synthetic n: {n}")))?,
                                seed: seed
                                    .parse()
                                    .map_err(|_| bad(format!("synthetic seed: {seed}")))?,
                            }
                        }
                        other => return Err(bad(format!("unknown dataset kind: {other}"))),
                    };
                }
                "algorithm" => {
                    config.algorithm = match value {
                        "fair" | "fair_cluster" => Algorithm::FairCluster,
                        "cfc" => Algorithm::Cfc,
                        other => return Err(bad(format!("unknown algorithm: {other}"))),
                    }
                }
                "attack" => {
                    config.attack = match value {
                        "none" => AttackKind::None,
                        "optimized" => AttackKind::Optimized,
                        "random" => AttackKind::Random,
                        other => return Err(bad(format!("unknown attack: {other}"))),
                    }
                }
                "metric" => {
                    config.target_metric = match value {
                        "balance" => TargetMetric::Balance,
                        "entropy" => TargetMetric::Entropy,
                        other => return Err(bad(format!("unknown metric: {other}"))),
                    }
                }
                "fractions" => {
                    config.budget_fractions = value
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|_| bad(format!("bad fraction: {v}")))
                        })
                        .collect::<Result<_, _>>()?;
                }
                "seeds" => {
                    config.seeds = value
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<u64>()
                                .map_err(|_| bad(format!("bad seed: {v}")))
                        })
                        .collect::<Result<_, _>>()?;
                }
                "k" => config.k = parse_int("k")?,
                "budget" => config.query_budget = parse_int("budget")?,
                "fairlet_p" => config.fairlet_p = parse_int("fairlet_p")?,
                "fairlet_q" => config.fairlet_q = parse_int("fairlet_q")?,
                "output_dir" => config.output_dir = PathBuf::from(value),
                "cfc_partitions" => config.cfc.partitions = parse_int("cfc_partitions")?,
                "cfc_row_fraction" => config.cfc.row_fraction = parse_num("cfc_row_fraction")?,
                "cfc_col_fraction" => config.cfc.col_fraction = parse_num("cfc_col_fraction")?,
                "cfc_hidden" => config.cfc.hyper.hidden = parse_int("cfc_hidden")?,
                "cfc_embed" => config.cfc.hyper.embed = parse_int("cfc_embed")?,
                "cfc_hops" => config.cfc.hyper.hops = parse_int("cfc_hops")?,
                "cfc_alpha" => config.cfc.hyper.alpha = parse_num("cfc_alpha")?,
                "cfc_beta" => config.cfc.hyper.beta = parse_num("cfc_beta")?,
                "cfc_tau" => config.cfc.hyper.tau = parse_num("cfc_tau")?,
                "cfc_dropout" => config.cfc.hyper.dropout = parse_num("cfc_dropout")?,
                "cfc_epochs" => config.cfc.hyper.epochs = parse_int("cfc_epochs")?,
                "cfc_lr" => config.cfc.hyper.learning_rate = parse_num("cfc_lr")?,
                other => return Err(bad(format!("unknown key: {other}"))),
            }
        }
        if !saw_dataset {
            return Err(bad("missing required key: dataset".into()));
        }
        config.cfc.hyper.k = config.k;
        config.cfc.k_range = (config.k, config.k + 2);
        config.validate()?;
        Ok(config)
    }
}

/// Fairness and (when ground truth exists) agreement metrics on the
/// defended samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub balance: f64,
    pub entropy: f64,
    pub nmi: Option<f64>,
    pub acc: Option<f64>,
}

/// One (fraction, seed) cell of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub fraction: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub attack: AttackKind,
    pub pre: Option<MetricSet>,
    pub post: Option<MetricSet>,
    /// `(query index, objective)` pairs from the attack, empty without one.
    pub trace: Vec<(usize, f64)>,
    /// Failure message when the cell aborted; metrics are then absent.
    pub error: Option<String>,
}

/// Mean/std aggregate of one metric over the seeds of a fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetric {
    pub pre_mean: f64,
    pub pre_std: f64,
    pub post_mean: f64,
    pub post_std: f64,
    /// `100 * (post_mean - pre_mean) / pre_mean`; `None` marks the
    /// undefined sentinel when the pre-attack mean is zero.
    pub percent_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub fraction: f64,
    pub cells: usize,
    pub failed: usize,
    pub balance: Option<AggregateMetric>,
    pub entropy: Option<AggregateMetric>,
    pub nmi: Option<AggregateMetric>,
    pub acc: Option<AggregateMetric>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub algorithm: Algorithm,
    pub attack: AttackKind,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
}

fn defended_metrics(
    dataset: &Dataset,
    clustering: &Clustering,
    split: &AttackSplit,
) -> Result<MetricSet, HarnessError> {
    let labels = restrict_labels(clustering, split);
    let defended = Clustering::new(labels, clustering.k())?;
    let groups = restrict(dataset.groups(), &split.defended);
    let truth = dataset
        .truth_labels()
        .map(|t| restrict(t, &split.defended));
    let (nmi_value, acc_value) = match truth {
        Some(truth) => (
            Some(nmi(&defended, &truth)?),
            Some(acc(&defended, &truth)?),
        ),
        None => (None, None),
    };
    Ok(MetricSet {
        balance: balance(&defended, &groups)?,
        entropy: entropy(&defended, &groups)?,
        nmi: nmi_value,
        acc: acc_value,
    })
}

fn cluster_with(
    config: &ExperimentConfig,
    dataset: &Dataset,
    seed: u64,
) -> Result<Clustering, HarnessError> {
    match config.algorithm {
        Algorithm::FairCluster => Ok(fair_cluster(
            dataset.features().view(),
            dataset.groups(),
            &ClustererConfig::new(config.k, seed),
            config.fairlet_p,
            config.fairlet_q,
        )?),
        Algorithm::Cfc => {
            let mut cfc = config.cfc.clone();
            cfc.hyper.k = config.k;
            cfc.fairlet_p = config.fairlet_p;
            cfc.fairlet_q = config.fairlet_q;
            Ok(run_cfc(dataset.features().view(), dataset.groups(), &cfc, seed)?.clustering)
        }
    }
}

/// Runs one (fraction, seed) cell; any error is reported by the caller.
fn run_cell(
    config: &ExperimentConfig,
    dataset: &Dataset,
    canonical_split: Option<&AttackSplit>,
    fraction: f64,
    seed: u64,
) -> Result<(MetricSet, MetricSet, Vec<(usize, f64)>), HarnessError> {
    // The toy instance ships with a designated attacked set (chosen so the
    // defended side is perfectly balanced); use it whenever the requested
    // fraction matches its size.
    let split = match canonical_split {
        Some(canonical)
            if (fraction * dataset.n() as f64).round() as usize == canonical.attacked.len() =>
        {
            canonical.clone()
        }
        _ => split_attack_set(dataset, fraction, derive_seed(seed, 0)),
    };
    let algo_seed = derive_seed(seed, 1);
    let pre_clustering = cluster_with(config, dataset, algo_seed)?;
    let pre = defended_metrics(dataset, &pre_clustering, &split)?;
    if matches!(config.attack, AttackKind::None) || split.attacked.is_empty() {
        return Ok((pre, pre, Vec::new()));
    }

    // The adversary always optimizes against the (cheap, black-box) fairlet
    // clusterer; a defended algorithm is evaluated on the transferred
    // perturbation. The oracle seed is fixed per cell so the objective is a
    // deterministic function of the candidate.
    let p = config.fairlet_p;
    let q = config.fairlet_q;
    let oracle_config = ClustererConfig::new(config.k, algo_seed);
    let features = dataset.features();
    let oracle = move |groups: &[usize]| {
        fair_cluster(features.view(), groups, &oracle_config, p, q)
    };
    // A Balance already at zero leaves the attack nothing to optimize;
    // switch to Entropy for the objective in that case.
    let target_metric = if config.target_metric == TargetMetric::Balance && pre.balance == 0.0 {
        TargetMetric::Entropy
    } else {
        config.target_metric
    };
    let problem = AttackProblem {
        dataset,
        split: &split,
        target_metric,
        oracle: &oracle,
        query_budget: config.query_budget,
        seed: derive_seed(seed, 2),
    };
    let result: AttackResult = match config.attack {
        AttackKind::Optimized => attack_fairness(&problem)?,
        AttackKind::Random => random_attack(&problem)?,
        AttackKind::None => unreachable!("handled above"),
    };
    let defended_groups = restrict(dataset.groups(), &split.defended);
    let merged = merge_groups(&result.best_assignment, &defended_groups, &split)?;
    let poisoned = dataset.with_groups(merged)?;
    let post_clustering = cluster_with(config, &poisoned, algo_seed)?;
    let post = defended_metrics(&poisoned, &post_clustering, &split)?;
    Ok((pre, post, result.query_trace))
}

fn aggregate_metric<F>(cells: &[&CellResult], pick: F) -> Option<AggregateMetric>
where
    F: Fn(&MetricSet) -> Option<f64>,
{
    let pairs: Vec<(f64, f64)> = cells
        .iter()
        .filter_map(|c| match (&c.pre, &c.post) {
            (Some(pre), Some(post)) => match (pick(pre), pick(post)) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            },
            _ => None,
        })
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let mean = |values: &[f64]| values.iter().sum::<f64>() / values.len() as f64;
    let std = |values: &[f64], m: f64| {
        if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
                .sqrt()
        }
    };
    let pre: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let post: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let pre_mean = mean(&pre);
    let post_mean = mean(&post);
    Some(AggregateMetric {
        pre_mean,
        pre_std: std(&pre, pre_mean),
        post_mean,
        post_std: std(&post, post_mean),
        percent_change: if pre_mean != 0.0 {
            Some(100.0 * (post_mean - pre_mean) / pre_mean)
        } else {
            None
        },
    })
}

/// Runs the full sweep: every fraction crossed with every seed, metrics on
/// the defended samples only, pre and post attack. A failing cell is
/// recorded with its error and the sweep continues. Fully deterministic
/// given the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    let canonical_split = match config.dataset {
        DatasetSource::Toy { seed } => Some(make_toy_dataset(seed).1),
        _ => None,
    };
    let mut cells = Vec::with_capacity(config.budget_fractions.len() * config.seeds.len());
    for &fraction in &config.budget_fractions {
        for &seed in &config.seeds {
            let cell = match run_cell(config, &dataset, canonical_split.as_ref(), fraction, seed) {
                Ok((pre, post, trace)) => CellResult {
                    fraction,
                    seed,
                    algorithm: config.algorithm,
                    attack: config.attack,
                    pre: Some(pre),
                    post: Some(post),
                    trace,
                    error: None,
                },
                Err(err) => CellResult {
                    fraction,
                    seed,
                    algorithm: config.algorithm,
                    attack: config.attack,
                    pre: None,
                    post: None,
                    trace: Vec::new(),
                    error: Some(err.to_string()),
                },
            };
            cells.push(cell);
        }
    }
    let mut aggregates = Vec::with_capacity(config.budget_fractions.len());
    for &fraction in &config.budget_fractions {
        let in_fraction: Vec<&CellResult> =
            cells.iter().filter(|c| c.fraction == fraction).collect();
        aggregates.push(AggregateRow {
            fraction,
            cells: in_fraction.len(),
            failed: in_fraction.iter().filter(|c| c.error.is_some()).count(),
            balance: aggregate_metric(&in_fraction, |m| Some(m.balance)),
            entropy: aggregate_metric(&in_fraction, |m| Some(m.entropy)),
            nmi: aggregate_metric(&in_fraction, |m| m.nmi),
            acc: aggregate_metric(&in_fraction, |m| m.acc),
        });
    }
    Ok(ExperimentReport {
        algorithm: config.algorithm,
        attack: config.attack,
        cells,
        aggregates,
    })
}

/// One row of a KS comparison between two attack outcome distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsRow {
    pub fraction: f64,
    pub metric: String,
    pub statistic: f64,
    pub p_value: f64,
    /// Significant at p < 0.01.
    pub significant: bool,
    /// The two samples were indistinguishable (statistic 0).
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KsTable {
    pub rows: Vec<KsRow>,
}

/// Compares the per-seed post-attack Balance and Entropy distributions of
/// two sweeps (typically optimized vs random attack), per fraction.
pub fn compare_attacks(
    ours: &ExperimentReport,
    random: &ExperimentReport,
) -> Result<KsTable, HarnessError> {
    let keys = |r: &ExperimentReport| -> Vec<(f64, u64)> {
        r.cells.iter().map(|c| (c.fraction, c.seed)).collect()
    };
    if keys(ours) != keys(random) {
        return Err(HarnessError::Mismatch(
            "fraction/seed grids differ between reports".into(),
        ));
    }
    let mut fractions: Vec<f64> = ours.cells.iter().map(|c| c.fraction).collect();
    fractions.dedup();
    let mut rows = Vec::new();
    for fraction in fractions {
        let collect = |r: &ExperimentReport, pick: fn(&MetricSet) -> f64| -> Vec<f64> {
            r.cells
                .iter()
                .filter(|c| c.fraction == fraction)
                .filter_map(|c| c.post.as_ref().map(pick))
                .collect()
        };
        for (metric, pick) in [
            ("balance", (|m: &MetricSet| m.balance) as fn(&MetricSet) -> f64),
            ("entropy", |m: &MetricSet| m.entropy),
        ] {
            let a = collect(ours, pick);
            let b = collect(random, pick);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let ks = ks_statistic(&a, &b)?;
            rows.push(KsRow {
                fraction,
                metric: metric.to_string(),
                statistic: ks.statistic,
                p_value: ks.p_value,
                significant: ks.p_value < 0.01,
                degenerate: ks.statistic == 0.0,
            });
        }
    }
    Ok(KsTable { rows })
}

/// Histogram pair plus summary statistics for the Balance of each basic
/// partition before and after an attack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpBalanceHistogram {
    /// Uniform bins over [0, 1]; a Balance of exactly 1 lands in the last.
    pub bins: usize,
    pub pre_counts: Vec<usize>,
    pub post_counts: Vec<usize>,
    pub pre_mean: f64,
    pub post_mean: f64,
    /// Nearest-rank 20th-percentile Balance values.
    pub pre_p20: f64,
    pub post_p20: f64,
}

fn bp_balances(bps: &BasicPartitionSet, groups: &[usize]) -> Result<Vec<f64>, HarnessError> {
    bps.partitions
        .iter()
        .map(|p| balance(p, groups).map_err(HarnessError::from))
        .collect()
}

fn percentile_20(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("balances are finite"));
    let rank = ((0.2 * sorted.len() as f64).ceil() as usize).max(1);
    sorted[rank - 1]
}

/// Bins the per-partition Balance values of two basic partition sets
/// against the same protected groups.
pub fn bp_balance_histogram(
    bps_pre: &BasicPartitionSet,
    bps_post: &BasicPartitionSet,
    groups: &[usize],
    bins: usize,
) -> Result<BpBalanceHistogram, HarnessError> {
    if bins == 0 {
        return Err(HarnessError::BadConfig("need at least one bin".into()));
    }
    if bps_pre.partitions.len() != bps_post.partitions.len() {
        return Err(HarnessError::Mismatch(
            "partition sets have different r".into(),
        ));
    }
    let pre = bp_balances(bps_pre, groups)?;
    let post = bp_balances(bps_post, groups)?;
    let bin_counts = |values: &[f64]| {
        let mut counts = vec![0usize; bins];
        for &v in values {
            let idx = ((v * bins as f64) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        counts
    };
    let mean = |values: &[f64]| values.iter().sum::<f64>() / values.len() as f64;
    Ok(BpBalanceHistogram {
        bins,
        pre_counts: bin_counts(&pre),
        post_counts: bin_counts(&post),
        pre_mean: mean(&pre),
        post_mean: mean(&post),
        pre_p20: percentile_20(&pre),
        post_p20: percentile_20(&post),
    })
}

/// Frobenius norm of the difference between two normalized co-association
/// matrices (entries in [0, 1]).
pub fn coassociation_frobenius_diff(
    a: &CoAssociationMatrix,
    b: &CoAssociationMatrix,
) -> Result<f64, HarnessError> {
    if a.n() != b.n() {
        return Err(HarnessError::Mismatch(
            "co-association matrices differ in size".into(),
        ));
    }
    let diff = a.normalized() - b.normalized();
    Ok(diff.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Mean-post / mean-pre ratios per fraction; `None` marks an indeterminate
/// ratio (pre-attack mean of zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioCurves {
    pub fractions: Vec<f64>,
    pub balance: Vec<Option<f64>>,
    pub entropy: Vec<Option<f64>>,
    pub nmi: Vec<Option<f64>>,
    pub acc: Vec<Option<f64>>,
}

pub fn ratio_curves(report: &ExperimentReport) -> RatioCurves {
    let ratio = |m: &Option<AggregateMetric>| -> Option<f64> {
        m.as_ref().and_then(|m| {
            if m.pre_mean != 0.0 {
                Some(m.post_mean / m.pre_mean)
            } else {
                None
            }
        })
    };
    RatioCurves {
        fractions: report.aggregates.iter().map(|a| a.fraction).collect(),
        balance: report.aggregates.iter().map(|a| ratio(&a.balance)).collect(),
        entropy: report.aggregates.iter().map(|a| ratio(&a.entropy)).collect(),
        nmi: report.aggregates.iter().map(|a| ratio(&a.nmi)).collect(),
        acc: report.aggregates.iter().map(|a| ratio(&a.acc)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

fn format_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes a report. JSON carries the full nested structure; CSV has one
/// row per cell with the columns `fraction, seed, algorithm, attack,
/// balance_pre, balance_post, entropy_pre, entropy_post, nmi_pre, nmi_post,
/// acc_pre, acc_post` (metric fields empty for failed cells). Output is
/// byte-stable for identical reports. Returns the written paths.
pub fn emit_report(
    report: &ExperimentReport,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    let io_err = |path: &Path, source: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Json => {
                let path = dir.join("report.json");
                let body = serde_json::to_string_pretty(report)
                    .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
                std::fs::write(&path, body + "\n").map_err(|e| io_err(&path, e))?;
                written.push(path);
            }
            ReportFormat::Csv => {
                let path = dir.join("report.csv");
                let mut writer =
                    csv::Writer::from_path(&path).map_err(|e| match e.into_kind() {
                        csv::ErrorKind::Io(source) => io_err(&path, source),
                        other => HarnessError::BadConfig(format!("csv failure: {other:?}")),
                    })?;
                writer
                    .write_record([
                        "fraction",
                        "seed",
                        "algorithm",
                        "attack",
                        "balance_pre",
                        "balance_post",
                        "entropy_pre",
                        "entropy_post",
                        "nmi_pre",
                        "nmi_post",
                        "acc_pre",
                        "acc_post",
                    ])
                    .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
                for cell in &report.cells {
                    let field = |pick: fn(&MetricSet) -> Option<f64>, m: &Option<MetricSet>| {
                        format_opt(m.as_ref().and_then(pick))
                    };
                    writer
                        .write_record([
                            cell.fraction.to_string(),
                            cell.seed.to_string(),
                            cell.algorithm.to_string(),
                            cell.attack.to_string(),
                            field(|m| Some(m.balance), &cell.pre),
                            field(|m| Some(m.balance), &cell.post),
                            field(|m| Some(m.entropy), &cell.pre),
                            field(|m| Some(m.entropy), &cell.post),
                            field(|m| m.nmi, &cell.pre),
                            field(|m| m.nmi, &cell.post),
                            field(|m| m.acc, &cell.pre),
                            field(|m| m.acc, &cell.post),
                        ])
                        .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
                }
                writer
                    .flush()
                    .map_err(|e| io_err(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
