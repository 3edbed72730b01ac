//! Command-line front end: synth, ingest, cluster, train, forecast, evaluate.
//!
//! Every parameter can also come from a TOML config file (`--config`), one
//! section per subcommand; flags override the file. All randomness flows
//! from a single `--seed` per command, so identical invocations produce
//! byte-identical outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use evmodel::eval::{self, ExperimentConfig, ForecastConfig};
use evmodel::features::build_matrix;
use evmodel::forecast::{
    aggregate_forecast, cohort_stats_from_cluster, cohort_stats_from_labels, RateLimits,
};
use evmodel::kmeans::{choose_k, ClusterModel, KmeansConfig};
use evmodel::mlp::{
    encode_users, random_search, train, ClassifierArtifact, SearchSpace, TrainConfig,
};
use evmodel::session::{parse_sessions, ParseMode, SessionDataset};
use evmodel::synth::{default_archetypes, generate, parse_labels_csv, CohortSpec};

#[derive(Parser)]
#[command(
    name = "evmodel",
    version,
    about = "EV charging behavior models and day-ahead load forecasts"
)]
struct Cli {
    /// TOML config file with per-subcommand sections; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Synth(SynthArgs),
    /// Parse and validate a sessions CSV.
    Ingest(IngestArgs),
    /// Extract features and fit the K-means user groups.
    Cluster(ClusterArgs),
    /// Train the MLP classifier on cluster labels.
    Train(TrainArgs),
    /// Generate a day-ahead aggregate load envelope.
    Forecast(ForecastArgs),
    /// Run the k-fold cross-validation experiment.
    Evaluate(EvaluateArgs),
}

/// Usage/validation problems exit 2, runtime failures exit 1.
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match load_config(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => return report(e),
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args, file.synth),
        Command::Ingest(args) => cmd_ingest(args, file.ingest),
        Command::Cluster(args) => cmd_cluster(args, file.cluster),
        Command::Train(args) => cmd_train(args, file.train),
        Command::Forecast(args) => cmd_forecast(args, file.forecast),
        Command::Evaluate(args) => cmd_evaluate(args, file.evaluate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    match e {
        CliError::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        CliError::Runtime(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    synth: SynthSection,
    #[serde(default)]
    ingest: IngestSection,
    #[serde(default)]
    cluster: ClusterSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    forecast: ForecastSection,
    #[serde(default)]
    evaluate: EvaluateSection,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            if !p.exists() {
                return Err(usage(format!("config file not found: {}", p.display())));
            }
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(CliError::Runtime)?;
            toml::from_str(&text).map_err(|e| usage(format!("bad config file: {e}")))
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{what} file not found: {}", path.display())))
    }
}

fn read_dataset(path: &Path, strict: bool) -> Result<SessionDataset, CliError> {
    require_file(path, "sessions")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let outcome = parse_sessions(&text, mode)
        .with_context(|| format!("parsing {}", path.display()))?;
    for issue in &outcome.issues {
        eprintln!("warning: {}: {issue}", path.display());
    }
    Ok(outcome.dataset)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, CliError> {
    require_file(path, what)?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {} as {what} JSON", path.display()))
        .map_err(CliError::Runtime)
}

// ---------------------------------------------------------------- synth

#[derive(Args)]
struct SynthArgs {
    /// Directory for sessions.csv and labels.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Total user count; cohort sizes scale proportionally.
    #[arg(long)]
    users: Option<usize>,
    /// Sessions per user, applied to every cohort.
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthSection {
    out_dir: Option<PathBuf>,
    users: Option<usize>,
    sessions: Option<usize>,
    seed: Option<u64>,
    /// Full cohort overrides; when present, `users`/`sessions` are ignored.
    cohorts: Option<Vec<CohortSpec>>,
}

fn cmd_synth(args: SynthArgs, file: SynthSection) -> Result<(), CliError> {
    let out_dir = args
        .out_dir
        .or(file.out_dir)
        .ok_or_else(|| usage("missing --out-dir"))?;
    let seed = args.seed.or(file.seed).unwrap_or(42);

    let specs = match file.cohorts {
        Some(cohorts) => cohorts,
        None => {
            let mut specs = default_archetypes();
            if let Some(users) = args.users.or(file.users) {
                if users == 0 {
                    return Err(usage("--users must be >= 1"));
                }
                let total: usize = specs.iter().map(|s| s.n_users).sum();
                let mut assigned = 0;
                for spec in &mut specs {
                    spec.n_users =
                        ((spec.n_users * users) as f64 / total as f64).round().max(1.0) as usize;
                    assigned += spec.n_users;
                }
                // absorb rounding drift in the first cohort
                let first = &mut specs[0].n_users;
                *first = (*first as i64 + users as i64 - assigned as i64).max(1) as usize;
            }
            if let Some(sessions) = args.sessions.or(file.sessions) {
                if sessions == 0 {
                    return Err(usage("--sessions must be >= 1"));
                }
                for spec in &mut specs {
                    spec.sessions_per_user = sessions;
                }
            }
            specs
        }
    };

    let labeled = generate(&specs, seed).map_err(|e| usage(e.to_string()))?;
    let sessions_path = out_dir.join("sessions.csv");
    let labels_path = out_dir.join("labels.csv");
    write_file(&sessions_path, &labeled.dataset.to_csv())?;
    write_file(&labels_path, &labeled.labels_csv())?;
    println!(
        "wrote {} ({} users, {} sessions) and {}",
        sessions_path.display(),
        labeled.dataset.n_users(),
        labeled.dataset.len(),
        labels_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- ingest

#[derive(Args)]
struct IngestArgs {
    /// Input sessions CSV.
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Fail on any bad row instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Write the validated sessions back out (normalized form).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IngestSection {
    sessions: Option<PathBuf>,
    strict: Option<bool>,
    output: Option<PathBuf>,
}

fn cmd_ingest(args: IngestArgs, file: IngestSection) -> Result<(), CliError> {
    let sessions = args
        .sessions
        .or(file.sessions)
        .ok_or_else(|| usage("missing --sessions"))?;
    let strict = args.strict || file.strict.unwrap_or(false);
    let ds = read_dataset(&sessions, strict)?;
    println!(
        "{}: {} sessions across {} users",
        sessions.display(),
        ds.len(),
        ds.n_users()
    );
    if let Some(output) = args.output.or(file.output) {
        write_file(&output, &ds.to_csv())?;
        println!("wrote {}", output.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- cluster

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Cluster model JSON output.
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Sweep a k range, e.g. `1:8`, writing a `k,cost` curve.
    #[arg(long)]
    sweep: Option<String>,
    /// Output path for the sweep curve CSV.
    #[arg(long)]
    sweep_out: Option<PathBuf>,
    /// Un-normalized features CSV output (normalization in a JSON sidecar).
    #[arg(long)]
    features_out: Option<PathBuf>,
    /// Ground-truth labels CSV; prints the agreement (ARI) when given.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClusterSection {
    sessions: Option<PathBuf>,
    model_out: Option<PathBuf>,
    k: Option<usize>,
    seed: Option<u64>,
    restarts: Option<usize>,
    epsilon: Option<f64>,
    max_iter: Option<usize>,
    sweep: Option<String>,
    sweep_out: Option<PathBuf>,
    features_out: Option<PathBuf>,
    labels: Option<PathBuf>,
}

fn parse_sweep(spec: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("bad --sweep `{spec}`, expected `kmin:kmax`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: usize = parts[0].parse().map_err(|_| bad())?;
    let hi: usize = parts[1].parse().map_err(|_| bad())?;
    if lo < 1 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn cmd_cluster(args: ClusterArgs, file: ClusterSection) -> Result<(), CliError> {
    let sessions = args
        .sessions
        .or(file.sessions)
        .ok_or_else(|| usage("missing --sessions"))?;
    let model_out = args
        .model_out
        .or(file.model_out)
        .ok_or_else(|| usage("missing --model-out"))?;
    let cfg = KmeansConfig {
        k: args.k.or(file.k).unwrap_or(4),
        epsilon: args.epsilon.or(file.epsilon).unwrap_or(1e-6),
        max_iter: args.max_iter.or(file.max_iter).unwrap_or(300),
        seed: args.seed.or(file.seed).unwrap_or(0),
        restarts: args.restarts.or(file.restarts).unwrap_or(10),
    };
    if cfg.k < 1 {
        return Err(usage("--k must be >= 1"));
    }

    let ds = read_dataset(&sessions, false)?;
    let matrix = build_matrix(&ds).map_err(|e| CliError::Runtime(e.into()))?;
    for user in matrix.excluded_users() {
        eprintln!("warning: user `{user}` excluded (fewer than 2 sessions)");
    }

    if let Some(features_out) = args.features_out.or(file.features_out) {
        write_file(&features_out, &matrix.to_csv())?;
        let sidecar = features_out.with_extension("norm.json");
        write_json(&sidecar, matrix.normalization())?;
        println!("wrote {} and {}", features_out.display(), sidecar.display());
    }

    let model = evmodel::kmeans::fit(&matrix, &cfg).map_err(|e| CliError::Runtime(e.into()))?;
    write_json(&model_out, &model)?;
    println!(
        "wrote {} (k = {}, cost = {:.6}, {} iterations)",
        model_out.display(),
        model.k,
        model.cost,
        model.iterations
    );

    if let Some(sweep) = args.sweep.or(file.sweep) {
        let (lo, hi) = parse_sweep(&sweep)?;
        let sweep_out = args
            .sweep_out
            .or(file.sweep_out)
            .unwrap_or_else(|| model_out.with_extension("cost_curve.csv"));
        let curve = choose_k(&matrix, lo..=hi, &cfg).map_err(|e| CliError::Runtime(e.into()))?;
        let mut out = String::from("k,cost\n");
        for (k, cost) in &curve {
            out.push_str(&format!("{k},{cost}\n"));
        }
        write_file(&sweep_out, &out)?;
        println!("wrote {}", sweep_out.display());
    }

    if let Some(labels_path) = args.labels.or(file.labels) {
        require_file(&labels_path, "labels")?;
        let truth = parse_labels_csv(
            &fs::read_to_string(&labels_path)
                .with_context(|| format!("reading {}", labels_path.display()))?,
        )
        .map_err(|e| CliError::Runtime(anyhow::anyhow!(e)))?;
        let users: Vec<&str> = matrix.user_ids().collect();
        let pred: Vec<usize> = users.iter().map(|u| model.assignments[*u]).collect();
        let gt: Vec<&str> = users
            .iter()
            .map(|u| truth.get(*u).map(String::as_str).unwrap_or(""))
            .collect();
        let ari = eval::adjusted_rand_index(&pred, &gt)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!(e.to_string())))?;
        println!("ARI vs {}: {ari:.4}", labels_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Cluster model JSON providing the labels.
    #[arg(long)]
    cluster_model: Option<PathBuf>,
    /// Classifier JSON output.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Sessions sampled per user for the input encoding.
    #[arg(long)]
    d: Option<usize>,
    /// Hidden layer sizes, comma separated, e.g. `32` or `64,32`.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Pick hyperparameters by random search with this many candidates.
    #[arg(long)]
    search_budget: Option<usize>,
    /// Cross-validation folds for the search.
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Cost trace CSV output.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSection {
    sessions: Option<PathBuf>,
    cluster_model: Option<PathBuf>,
    model_out: Option<PathBuf>,
    d: Option<usize>,
    hidden: Option<String>,
    learning_rate: Option<f64>,
    gamma: Option<f64>,
    epochs: Option<usize>,
    seed: Option<u64>,
    search_budget: Option<usize>,
    cv_folds: Option<usize>,
    trace_out: Option<PathBuf>,
}

fn parse_hidden(spec: &str) -> Result<Vec<usize>, CliError> {
    spec.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("bad --hidden `{spec}`, expected e.g. `64,32`")))
        .and_then(|v| {
            if v.is_empty() || v.contains(&0) {
                Err(usage("hidden layer sizes must be >= 1"))
            } else {
                Ok(v)
            }
        })
}

fn cmd_train(args: TrainArgs, file: TrainSection) -> Result<(), CliError> {
    let sessions = args
        .sessions
        .or(file.sessions)
        .ok_or_else(|| usage("missing --sessions"))?;
    let cluster_model = args
        .cluster_model
        .or(file.cluster_model)
        .ok_or_else(|| usage("missing --cluster-model"))?;
    let model_out = args
        .model_out
        .or(file.model_out)
        .ok_or_else(|| usage("missing --model-out"))?;
    let d = args.d.or(file.d).unwrap_or(20);
    if d < 1 {
        return Err(usage("--d must be >= 1"));
    }
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let ds = read_dataset(&sessions, false)?;
    let cluster: ClusterModel = read_json(&cluster_model, "cluster model")?;
    let records = encode_users(&ds, &cluster.assignments, cluster.k, d, seed)
        .map_err(|e| CliError::Runtime(e.into()))?;

    let mut hidden = match args.hidden.or(file.hidden) {
        Some(spec) => parse_hidden(&spec)?,
        None => vec![32],
    };
    let mut cfg = TrainConfig {
        gamma: args.gamma.or(file.gamma).unwrap_or(1e-3),
        learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(2.0),
        epochs: args.epochs.or(file.epochs).unwrap_or(3000),
        seed,
        init_scale: 0.5,
    };

    if let Some(budget) = args.search_budget.or(file.search_budget) {
        if budget < 1 {
            return Err(usage("--search-budget must be >= 1"));
        }
        let folds = args.cv_folds.or(file.cv_folds).unwrap_or(5);
        let report = random_search(&records, folds, &SearchSpace::default(), budget, seed)
            .map_err(|e| CliError::Runtime(e.into()))?;
        match report.best_candidate() {
            Some(best) => {
                println!(
                    "search: best of {budget} candidates: hidden {:?}, lr {:.5}, gamma {:.4} (CV accuracy {:.3})",
                    best.hidden_layers, best.learning_rate, best.gamma, best.mean_accuracy
                );
                hidden = best.hidden_layers.clone();
                cfg.learning_rate = best.learning_rate;
                cfg.gamma = best.gamma;
            }
            None => eprintln!("warning: every search candidate failed; using defaults"),
        }
    }

    let mut layer_sizes = vec![records.input_dim()];
    layer_sizes.extend(&hidden);
    layer_sizes.push(cluster.k);
    let outcome = train(&records, &layer_sizes, &cfg).map_err(|e| CliError::Runtime(e.into()))?;

    if let Some(trace_out) = args.trace_out.or(file.trace_out) {
        let mut out = String::from("epoch,cost\n");
        for (epoch, cost) in outcome.cost_trace.iter().enumerate() {
            out.push_str(&format!("{epoch},{cost}\n"));
        }
        write_file(&trace_out, &out)?;
        println!("wrote {}", trace_out.display());
    }

    let artifact = ClassifierArtifact::new(outcome.model, &records);
    write_json(&model_out, &artifact)?;
    println!(
        "wrote {} (layers {:?}, final cost {:.6})",
        model_out.display(),
        layer_sizes,
        outcome.cost_trace.last().unwrap()
    );
    Ok(())
}

// ---------------------------------------------------------------- forecast

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long)]
    cluster_model: Option<PathBuf>,
    /// Classify users with this MLP artifact instead of the stored cluster
    /// assignments.
    #[arg(long)]
    mlp_model: Option<PathBuf>,
    /// Output prefix; writes `<prefix>.csv` and `<prefix>.json`.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
    /// EV count for the forecast day; defaults to the labeled user count.
    #[arg(long)]
    n_evs: Option<usize>,
    #[arg(long)]
    t_slots: Option<usize>,
    #[arg(long)]
    dt_hours: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    r_min: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ForecastSection {
    sessions: Option<PathBuf>,
    cluster_model: Option<PathBuf>,
    mlp_model: Option<PathBuf>,
    out_prefix: Option<PathBuf>,
    n_evs: Option<usize>,
    t_slots: Option<usize>,
    dt_hours: Option<f64>,
    draws: Option<usize>,
    r_max: Option<f64>,
    r_min: Option<f64>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct ForecastSummary {
    total_energy_kwh: f64,
    n_evs: usize,
    seed: u64,
    draws: usize,
    t_slots: usize,
    dt_hours: f64,
}

fn cmd_forecast(args: ForecastArgs, file: ForecastSection) -> Result<(), CliError> {
    let sessions = args
        .sessions
        .or(file.sessions)
        .ok_or_else(|| usage("missing --sessions"))?;
    let cluster_model = args
        .cluster_model
        .or(file.cluster_model)
        .ok_or_else(|| usage("missing --cluster-model"))?;
    let out_prefix = args
        .out_prefix
        .or(file.out_prefix)
        .ok_or_else(|| usage("missing --out-prefix"))?;
    let t_slots = args.t_slots.or(file.t_slots).unwrap_or(96);
    let dt_hours = args.dt_hours.or(file.dt_hours).unwrap_or(0.25);
    let draws = args.draws.or(file.draws).unwrap_or(200);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let limits = RateLimits {
        r_max_kw: args.r_max.or(file.r_max).unwrap_or(6.6),
        r_min_kw: args.r_min.or(file.r_min).unwrap_or(-6.6),
    };
    limits.validate().map_err(|e| usage(e.to_string()))?;
    if let Some(0) = args.n_evs.or(file.n_evs) {
        return Err(usage("--n-evs must be >= 1"));
    }
    if draws < 1 {
        return Err(usage("--draws must be >= 1"));
    }

    let ds = read_dataset(&sessions, false)?;
    let cluster: ClusterModel = read_json(&cluster_model, "cluster model")?;

    let stats = match args.mlp_model.or(file.mlp_model) {
        None => cohort_stats_from_cluster(&cluster, &ds)
            .map_err(|e| CliError::Runtime(e.into()))?,
        Some(mlp_path) => {
            let artifact: ClassifierArtifact = read_json(&mlp_path, "classifier")?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels = BTreeMap::new();
            for user in cluster.assignments.keys() {
                let user_sessions = ds.sessions_by_user(user);
                if user_sessions.is_empty() {
                    continue;
                }
                let group = artifact
                    .classify(&user_sessions, &mut rng)
                    .map_err(|e| CliError::Runtime(e.into()))?;
                labels.insert(user.clone(), group);
            }
            cohort_stats_from_labels(&ds, &labels, cluster.k)
                .map_err(|e| CliError::Runtime(e.into()))?
        }
    };

    let n_evs = args
        .n_evs
        .or(file.n_evs)
        .unwrap_or(cluster.assignments.len());
    let group_limits = vec![limits; stats.groups.len()];
    let forecast = aggregate_forecast(&stats, n_evs, &group_limits, t_slots, dt_hours, draws, seed)
        .map_err(|e| CliError::Runtime(e.into()))?;

    let csv_path = out_prefix.with_extension("csv");
    let json_path = out_prefix.with_extension("json");
    write_file(&csv_path, &forecast.to_csv())?;
    write_json(
        &json_path,
        &ForecastSummary {
            total_energy_kwh: forecast.total_energy_kwh,
            n_evs: forecast.n_evs,
            seed: forecast.seed,
            draws: forecast.draws,
            t_slots: forecast.t_slots,
            dt_hours: forecast.dt_hours,
        },
    )?;
    println!(
        "wrote {} and {} (E_total = {:.2} kWh for {} EVs)",
        csv_path.display(),
        json_path.display(),
        forecast.total_energy_kwh,
        forecast.n_evs
    );
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Ground-truth labels CSV (optional).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output prefix; writes `<prefix>.json` and `<prefix>.csv`.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
    #[arg(long)]
    kfolds: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    search_budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateSection {
    sessions: Option<PathBuf>,
    labels: Option<PathBuf>,
    out_prefix: Option<PathBuf>,
    kfolds: Option<usize>,
    k: Option<usize>,
    d: Option<usize>,
    hidden: Option<String>,
    learning_rate: Option<f64>,
    gamma: Option<f64>,
    epochs: Option<usize>,
    draws: Option<usize>,
    search_budget: Option<usize>,
    seed: Option<u64>,
}

fn cmd_evaluate(args: EvaluateArgs, file: EvaluateSection) -> Result<(), CliError> {
    let sessions = args
        .sessions
        .or(file.sessions)
        .ok_or_else(|| usage("missing --sessions"))?;
    let out_prefix = args
        .out_prefix
        .or(file.out_prefix)
        .ok_or_else(|| usage("missing --out-prefix"))?;

    let hidden = match args.hidden.or(file.hidden) {
        Some(spec) => parse_hidden(&spec)?,
        None => vec![32],
    };
    let cfg = ExperimentConfig {
        kfolds: args.kfolds.or(file.kfolds).unwrap_or(10),
        kmeans: KmeansConfig {
            k: args.k.or(file.k).unwrap_or(4),
            ..Default::default()
        },
        d: args.d.or(file.d).unwrap_or(20),
        hidden_layers: hidden,
        train: TrainConfig {
            gamma: args.gamma.or(file.gamma).unwrap_or(1e-3),
            learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(2.0),
            epochs: args.epochs.or(file.epochs).unwrap_or(3000),
            ..Default::default()
        },
        search_budget: args.search_budget.or(file.search_budget),
        search_space: SearchSpace::default(),
        forecast: ForecastConfig {
            draws: args.draws.or(file.draws).unwrap_or(200),
            ..Default::default()
        },
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    if cfg.kfolds < 2 {
        return Err(usage("--kfolds must be >= 2"));
    }
    if cfg.d < 1 {
        return Err(usage("--d must be >= 1"));
    }

    let ds = read_dataset(&sessions, false)?;
    let ground_truth = match args.labels.or(file.labels) {
        Some(path) => {
            require_file(&path, "labels")?;
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            Some(parse_labels_csv(&text).map_err(|e| CliError::Runtime(anyhow::anyhow!(e)))?)
        }
        None => None,
    };

    let report = eval::run_experiment(&ds, ground_truth.as_ref(), &cfg)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!(e.to_string())))?;

    for f in &report.folds {
        println!(
            "fold {}: train acc {:.3}, test acc {:.3}, mape {:.3}, agreement mape {:.4}{}",
            f.fold,
            f.train_accuracy,
            f.test_accuracy,
            f.mape,
            f.agreement_mape,
            match f.gt_accuracy {
                Some(a) => format!(", gt acc {a:.3}"),
                None => String::new(),
            }
        );
    }
    println!(
        "means: train acc {:.3}, test acc {:.3}, mape {:.3}, agreement mape {:.4}",
        report.mean_train_accuracy,
        report.mean_test_accuracy,
        report.mean_mape,
        report.mean_agreement_mape
    );

    write_json(&out_prefix.with_extension("json"), &report)?;
    write_file(&out_prefix.with_extension("csv"), &report.to_csv())?;
    println!(
        "wrote {} and {}",
        out_prefix.with_extension("json").display(),
        out_prefix.with_extension("csv").display()
    );
    Ok(())
}
