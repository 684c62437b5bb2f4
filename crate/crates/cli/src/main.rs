//! `mingle`: detect stationary social interactions and group formations
//! from multi-modal mobile-sensing logs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mingle_core::config::RunConfig;
use mingle_core::pipeline::{
    read_predictions, run_pipeline, step_evaluate, step_features, step_groups, step_predict,
    step_report, step_simulate, step_train, step_tune, OutPaths,
};
use mingle_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Parser)]
#[command(
    name = "mingle",
    version,
    about = "Social interaction and group-formation detection from mobile-sensing logs"
)]
struct Cli {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override the session data directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Summary format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session into the data directory.
    Simulate,
    /// Ingest the session and write features.csv and np.csv.
    Features,
    /// Grid-search hyper-parameters on the tuning pairs (tuned.json).
    Tune,
    /// Train the model on the validation pairs (model.json).
    Train,
    /// Cross-validated predictions for every pair (predictions.csv).
    Predict,
    /// Community partitions per second at one resolution (partitions.csv).
    Groups {
        /// Modularity resolution; defaults to eval.partition_gamma.
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Link-, node- and group-level metrics (metrics.json, pr_curve.csv).
    Evaluate,
    /// Render the SVG figures from metrics.json.
    Report,
    /// The whole chain: simulate through report.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut rc = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        rc.run.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        rc.run.jobs = jobs;
    }
    if let Some(data) = &cli.data {
        rc.paths.data_dir = data.display().to_string();
    }
    if let Some(out) = &cli.out {
        rc.paths.out_dir = out.display().to_string();
    }
    rc.validate()?;
    Ok(rc)
}

fn emit(format: Format, text: String, json: serde_json::Value) {
    match format {
        Format::Text => println!("{text}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&json).unwrap()),
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let rc = load_config(cli)?;
    if rc.run.jobs > 0 {
        // Worker count never changes results, only wall time.
        rayon::ThreadPoolBuilder::new()
            .num_threads(rc.run.jobs)
            .build_global()
            .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    }
    let paths = OutPaths::new(&rc);

    match &cli.command {
        Command::Simulate => {
            let ds = step_simulate(&rc)?;
            let frac = ds.labels.as_ref().map(|g| g.positive_fraction()).unwrap_or(0.0);
            emit(
                cli.format,
                format!(
                    "simulated {} participants for {} s into {} (positive fraction {:.4})",
                    ds.n_participants(),
                    ds.duration_s,
                    rc.paths.data_dir,
                    frac
                ),
                serde_json::json!({
                    "status": "ok",
                    "data_dir": rc.paths.data_dir,
                    "n_participants": ds.n_participants(),
                    "duration_s": ds.duration_s,
                    "positive_fraction": frac,
                }),
            );
        }
        Command::Features => {
            let table = step_features(&rc)?;
            emit(
                cli.format,
                format!(
                    "wrote {} with {} rows x {} features (and {})",
                    paths.features_csv.display(),
                    table.n_rows(),
                    table.schema.len(),
                    paths.np_csv.display()
                ),
                serde_json::json!({
                    "status": "ok",
                    "features_csv": paths.features_csv,
                    "np_csv": paths.np_csv,
                    "n_rows": table.n_rows(),
                    "n_features": table.schema.len(),
                }),
            );
        }
        Command::Tune => {
            let tuned = step_tune(&rc)?;
            emit(
                cli.format,
                format!(
                    "best config: depth {} colsample {} subsample {} lr {} (tuning AP {:.4}) -> {}",
                    tuned.best.max_depth,
                    tuned.best.colsample_bytree,
                    tuned.best.subsample,
                    tuned.best.learning_rate,
                    tuned.best_ap,
                    paths.tuned_json.display()
                ),
                serde_json::json!({
                    "status": "ok",
                    "tuned_json": paths.tuned_json,
                    "best_ap": tuned.best_ap,
                    "best": tuned.best,
                }),
            );
        }
        Command::Train => {
            let model = step_train(&rc)?;
            emit(
                cli.format,
                format!(
                    "trained {} trees on {} features -> {}",
                    model.trees.len(),
                    model.n_features(),
                    paths.model_json.display()
                ),
                serde_json::json!({
                    "status": "ok",
                    "model_json": paths.model_json,
                    "n_trees": model.trees.len(),
                    "n_features": model.n_features(),
                }),
            );
        }
        Command::Predict => {
            let pred = step_predict(&rc)?;
            emit(
                cli.format,
                format!(
                    "wrote {} ({} rows, {} validation pairs)",
                    paths.predictions_csv.display(),
                    pred.n_rows(),
                    pred.fold_of_pair.iter().filter(|&&f| f >= 0).count()
                ),
                serde_json::json!({
                    "status": "ok",
                    "predictions_csv": paths.predictions_csv,
                    "n_rows": pred.n_rows(),
                }),
            );
        }
        Command::Groups { resolution } => {
            let gamma = resolution.unwrap_or(rc.eval.partition_gamma);
            let path = step_groups(&rc, gamma)?;
            let pred = read_predictions(&paths.predictions_csv)?;
            emit(
                cli.format,
                format!(
                    "wrote {} at resolution {gamma} ({} seconds)",
                    path.display(),
                    pred.duration_s
                ),
                serde_json::json!({
                    "status": "ok",
                    "partitions_csv": path,
                    "resolution": gamma,
                    "seconds": pred.duration_s,
                }),
            );
        }
        Command::Evaluate => {
            let metrics = step_evaluate(&rc)?;
            emit(
                cli.format,
                format!(
                    "AP: model {:.4}, NP {:.4}, NPC {:.4}\n\
                     operating point: p*={:.3} -> precision {:.4}, recall {:.4}\n\
                     best resolution {:.1}: node {:.4}, group {:.4}\n\
                     wrote {}",
                    metrics.ap_gbdt,
                    metrics.ap_np,
                    metrics.ap_npc,
                    metrics.threshold_gbdt,
                    metrics.confusion_gbdt.precision,
                    metrics.confusion_gbdt.recall,
                    metrics.best_gamma_gbdt,
                    metrics.best_node_accuracy_gbdt,
                    metrics.best_group_accuracy_gbdt,
                    paths.metrics_json.display()
                ),
                serde_json::to_value(&metrics).unwrap(),
            );
        }
        Command::Report => {
            let figures = step_report(&rc)?;
            let names: Vec<String> = figures.iter().map(|p| p.display().to_string()).collect();
            emit(
                cli.format,
                format!("wrote {}", names.join(", ")),
                serde_json::json!({ "status": "ok", "figures": names }),
            );
        }
        Command::Pipeline => {
            let metrics = run_pipeline(&rc)?;
            emit(
                cli.format,
                format!(
                    "pipeline finished: AP model {:.4} vs NP {:.4} vs NPC {:.4}; \
                     best resolution {:.1} (node {:.4}, group {:.4}); artifacts in {}",
                    metrics.ap_gbdt,
                    metrics.ap_np,
                    metrics.ap_npc,
                    metrics.best_gamma_gbdt,
                    metrics.best_node_accuracy_gbdt,
                    metrics.best_group_accuracy_gbdt,
                    rc.paths.out_dir
                ),
                serde_json::to_value(&metrics).unwrap(),
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.kind(),
                "message": err.to_string(),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
