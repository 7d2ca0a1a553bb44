//! `fairkit` — fair clustering, fairness attacks, and the consensus
//! defense from the command line.
//!
//! Every subcommand is deterministic given its flags and seeds, exits 0 on
//! success, and on failure prints a machine-readable JSON object
//! (`{"error": ...}`) to stderr and exits nonzero. `FAIRKIT_OUT_DIR` sets
//! the default output directory for `experiment`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fairkit::attack::{attack_fairness, AttackProblem, AttackResult, TargetMetric};
use fairkit::cfc::{
    co_association, generate_basic_partitions, run_cfc, save_checkpoint, save_coassociation,
    CfcPipelineConfig, PartitionSpec,
};
use fairkit::clusterers::{fair_cluster, kmeans, kmedian, ClustererConfig};
use fairkit::data::{
    load_dataset, make_toy_dataset, merge_groups, restrict, save_dataset, split_attack_set,
    CsvSchema,
};
use fairkit::harness::{
    bp_balance_histogram, coassociation_frobenius_diff, compare_attacks, emit_report,
    ratio_curves, run_experiment, ExperimentConfig, ExperimentReport, ReportFormat,
};
use fairkit::metrics::{acc, balance, entropy, nmi};
use fairkit::{AttackSplit, Clustering, Dataset};

#[derive(Parser)]
#[command(name = "fairkit", version, about = "Fair clustering, fairness attacks, and the consensus defense")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the 20-sample toy dataset (and its canonical attack split).
    GenToy(GenToyArgs),
    /// Cluster a dataset and report fairness/agreement metrics.
    Cluster(ClusterArgs),
    /// Run the optimized (or random-baseline) fairness attack.
    Attack(AttackArgs),
    /// Train the consensus fair clustering defense.
    Defend(DefendArgs),
    /// Run a full sweep from a key/value config file.
    Experiment(ExperimentArgs),
    /// KS-compare the post-attack distributions of two sweep reports.
    Compare(CompareArgs),
    /// Basic-partition balance histograms and consensus diagnostics.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Optional destination for the canonical attack split JSON.
    #[arg(long)]
    split_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Fair,
    Kmeans,
    Kmedian,
    Cfc,
}

#[derive(Args)]
struct ClusterArgs {
    /// Dataset CSV (`f0..`, `group`, optional `label` columns).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "fair")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    fairlet_p: usize,
    #[arg(long, default_value_t = 5)]
    fairlet_q: usize,
    /// Labels + metrics JSON destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Balance,
    Entropy,
}

impl From<MetricArg> for TargetMetric {
    fn from(value: MetricArg) -> Self {
        match value {
            MetricArg::Balance => TargetMetric::Balance,
            MetricArg::Entropy => TargetMetric::Entropy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKindArg {
    Optimized,
    Random,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    data: PathBuf,
    /// Attack split JSON; mutually exclusive with --fraction.
    #[arg(long, conflicts_with = "fraction")]
    split: Option<PathBuf>,
    /// Attacked fraction of samples, split drawn from the seed.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, value_enum, default_value = "optimized")]
    kind: AttackKindArg,
    #[arg(long, value_enum, default_value = "balance")]
    metric: MetricArg,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    #[arg(long, default_value_t = 2)]
    fairlet_p: usize,
    #[arg(long, default_value_t = 5)]
    fairlet_q: usize,
    /// Attack result JSON destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DefendArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    partitions: usize,
    #[arg(long, default_value_t = 3000)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 16)]
    embed: usize,
    #[arg(long, default_value_t = 1)]
    hops: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 100.0)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.6)]
    dropout: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 2)]
    fairlet_p: usize,
    #[arg(long, default_value_t = 5)]
    fairlet_q: usize,
    /// Labels + metrics JSON destination.
    #[arg(long)]
    out: PathBuf,
    /// Optional model checkpoint destination.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Optional co-association matrix destination (binary).
    #[arg(long)]
    coassoc: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Key/value config file (see `ExperimentConfig::from_key_values`).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Optimized-attack report JSON.
    #[arg(long)]
    ours: PathBuf,
    /// Random-attack report JSON.
    #[arg(long)]
    random: PathBuf,
    /// KS table JSON destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    data: PathBuf,
    /// Attack split JSON.
    #[arg(long)]
    split: PathBuf,
    /// Attack result JSON whose assignment perturbs the attacked samples.
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    partitions: usize,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Diagnostics JSON destination.
    #[arg(long)]
    out: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Ok(load_dataset(path, &CsvSchema::default())
        .with_context(|| format!("loading {}", path.display()))?
        .0)
}

#[derive(Serialize)]
struct ClusterOutput {
    k: usize,
    labels: Vec<usize>,
    balance: f64,
    entropy: f64,
    nmi: Option<f64>,
    acc: Option<f64>,
}

fn cluster_output(dataset: &Dataset, clustering: &Clustering) -> Result<ClusterOutput> {
    let (nmi_value, acc_value) = match dataset.truth_labels() {
        Some(truth) => (
            Some(nmi(clustering, truth)?),
            Some(acc(clustering, truth)?),
        ),
        None => (None, None),
    };
    Ok(ClusterOutput {
        k: clustering.k(),
        labels: clustering.labels().to_vec(),
        balance: balance(clustering, dataset.groups())?,
        entropy: entropy(clustering, dataset.groups())?,
        nmi: nmi_value,
        acc: acc_value,
    })
}

fn cmd_gen_toy(args: GenToyArgs) -> Result<()> {
    let (dataset, split) = make_toy_dataset(args.seed);
    save_dataset(&dataset, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(split_out) = args.split_out {
        write_json(&split_out, &split)?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_cluster(args: ClusterArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let config = ClustererConfig::new(args.k, args.seed);
    let clustering = match args.algorithm {
        AlgorithmArg::Fair => fair_cluster(
            dataset.features().view(),
            dataset.groups(),
            &config,
            args.fairlet_p,
            args.fairlet_q,
        )?,
        AlgorithmArg::Kmeans => kmeans(dataset.features().view(), &config)?,
        AlgorithmArg::Kmedian => kmedian(dataset.features().view(), &config)?,
        AlgorithmArg::Cfc => {
            let mut cfc = CfcPipelineConfig::new(args.k);
            cfc.fairlet_p = args.fairlet_p;
            cfc.fairlet_q = args.fairlet_q;
            run_cfc(dataset.features().view(), dataset.groups(), &cfc, args.seed)?.clustering
        }
    };
    write_json(&args.out, &cluster_output(&dataset, &clustering)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let split: AttackSplit = match (&args.split, args.fraction) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let split: AttackSplit = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if !split.is_valid() || split.n() != dataset.n() {
                bail!("split does not partition the dataset indices");
            }
            split
        }
        (None, Some(fraction)) => {
            if !(0.0..=1.0).contains(&fraction) {
                bail!("fraction must lie in [0, 1]");
            }
            split_attack_set(&dataset, fraction, args.seed)
        }
        _ => bail!("exactly one of --split and --fraction is required"),
    };
    let oracle_config = ClustererConfig::new(args.k, args.seed);
    let features = dataset.features();
    let (p, q) = (args.fairlet_p, args.fairlet_q);
    let oracle =
        move |groups: &[usize]| fair_cluster(features.view(), groups, &oracle_config, p, q);
    let problem = AttackProblem {
        dataset: &dataset,
        split: &split,
        target_metric: args.metric.into(),
        oracle: &oracle,
        query_budget: args.budget,
        seed: args.seed,
    };
    let result: AttackResult = match args.kind {
        AttackKindArg::Optimized => attack_fairness(&problem)?,
        AttackKindArg::Random => fairkit::attack::random_attack(&problem)?,
    };
    write_json(&args.out, &result)?;
    println!(
        "pre {} -> best {} ({} queries); wrote {}",
        result.pre_attack_objective,
        result.best_objective,
        result.query_trace.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_defend(args: DefendArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let mut config = CfcPipelineConfig::new(args.k);
    config.partitions = args.partitions;
    config.fairlet_p = args.fairlet_p;
    config.fairlet_q = args.fairlet_q;
    config.hyper.epochs = args.epochs;
    config.hyper.hidden = args.hidden;
    config.hyper.embed = args.embed;
    config.hyper.hops = args.hops;
    config.hyper.alpha = args.alpha;
    config.hyper.beta = args.beta;
    config.hyper.tau = args.tau;
    config.hyper.dropout = args.dropout;
    config.hyper.learning_rate = args.lr;
    if let Some(coassoc) = &args.coassoc {
        let spec = PartitionSpec {
            partitions: config.partitions,
            row_fraction: config.row_fraction,
            col_fraction: config.col_fraction,
            k_range: config.k_range,
            seed: fairkit::rng::derive_seed(args.seed, 0),
        };
        let bps = generate_basic_partitions(dataset.features().view(), &spec)?;
        save_coassociation(&co_association(&bps)?, coassoc)?;
    }
    let output = run_cfc(
        dataset.features().view(),
        dataset.groups(),
        &config,
        args.seed,
    )?;
    if let Some(checkpoint) = &args.checkpoint {
        save_checkpoint(&output.model, checkpoint)?;
    }
    write_json(&args.out, &cluster_output(&dataset, &output.clustering)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config = ExperimentConfig::from_key_values(&text)?;
    let report = run_experiment(&config)?;
    let written = emit_report(
        &report,
        &config.output_dir,
        &[ReportFormat::Json, ReportFormat::Csv],
    )?;
    let curves = ratio_curves(&report);
    write_json(&config.output_dir.join("ratios.json"), &curves)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", config.output_dir.join("ratios.json").display());
    Ok(())
}

fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let ours = read_report(&args.ours)?;
    let random = read_report(&args.random)?;
    let table = compare_attacks(&ours, &random)?;
    write_json(&args.out, &table)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let split: AttackSplit = serde_json::from_str(
        &std::fs::read_to_string(&args.split)
            .with_context(|| format!("reading {}", args.split.display()))?,
    )?;
    if !split.is_valid() || split.n() != dataset.n() {
        bail!("split does not partition the dataset indices");
    }
    let result: AttackResult = serde_json::from_str(
        &std::fs::read_to_string(&args.assignment)
            .with_context(|| format!("reading {}", args.assignment.display()))?,
    )?;
    let defended_groups = restrict(dataset.groups(), &split.defended);
    let merged = merge_groups(&result.best_assignment, &defended_groups, &split)?;

    let spec = PartitionSpec::new(args.partitions, args.k, args.seed);
    let bps = generate_basic_partitions(dataset.features().view(), &spec)?;
    let s = co_association(&bps)?;
    // Stage 1 ignores group labels, so the attacked co-association matrix is
    // the clean one; the histograms differ only through the group vectors.
    let pre = bp_balance_histogram(&bps, &bps, dataset.groups(), args.bins)?;
    let post = bp_balance_histogram(&bps, &bps, &merged, args.bins)?;

    #[derive(Serialize)]
    struct Diagnostics {
        bins: usize,
        pre_counts: Vec<usize>,
        post_counts: Vec<usize>,
        pre_mean: f64,
        post_mean: f64,
        pre_p20: f64,
        post_p20: f64,
        coassociation_frobenius_diff: f64,
    }
    let diag = Diagnostics {
        bins: pre.bins,
        pre_counts: pre.pre_counts,
        post_counts: post.pre_counts,
        pre_mean: pre.pre_mean,
        post_mean: post.pre_mean,
        pre_p20: pre.pre_p20,
        post_p20: post.pre_p20,
        coassociation_frobenius_diff: coassociation_frobenius_diff(&s, &s)?,
    };
    write_json(&args.out, &diag)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenToy(args) => cmd_gen_toy(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Defend(args) => cmd_defend(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let payload = serde_json::json!({
            "error": {
                "message": err.to_string(),
                "chain": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            }
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
