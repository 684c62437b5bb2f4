//! The end-to-end batch pipeline as file-to-file steps.
//!
//! Each step reads and writes the documented artifacts, so chaining the
//! steps is exactly what the `pipeline` subcommand does and every
//! intermediate product can be inspected or regenerated on its own:
//!
//! * `simulate` -> session directory (`metadata.csv`, `<pid>_beacon.csv`,
//!   `<pid>_motion.csv`, `labels.csv`)
//! * `features` -> `features.csv`, `np.csv`
//! * `tune` -> `tuned.json`
//! * `train` -> `model.json`
//! * `predict` -> `predictions.csv`
//! * `groups` -> `partitions.csv`
//! * `evaluate` -> `metrics.json`, `pr_curve.csv`
//! * `report` -> `plots/*.svg`
//!
//! The 20% tuning split, fold assignments and every random draw derive
//! from the run seed, so a fixed seed reproduces every artifact byte for
//! byte regardless of worker count.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::community::{build_graph, extract_groups, louvain};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    ablation, best_resolution, confusion, npc_baseline, pr_curve, select_threshold,
    sweep_resolution,
};
use crate::features::{build_feature_table, export_csv, import_csv, PairFeatureTable};
use crate::gbdt::{clamp_probability, cross_validate, fit, grid_search, sigmoid, GbdtModel};
use crate::io::{ingest_session, read_label_grid, read_metadata_file, write_session};
use crate::model::SessionDataset;
use crate::preprocess::preprocess;
use crate::proximity::NormalizedProximity;
use crate::report::{write_pr_curves, Metrics, TunedFile};
use crate::sim::simulate;

/// Output file locations under the configured out directory.
#[derive(Debug, Clone)]
pub struct OutPaths {
    pub out_dir: PathBuf,
    pub features_csv: PathBuf,
    pub np_csv: PathBuf,
    pub tuned_json: PathBuf,
    pub model_json: PathBuf,
    pub predictions_csv: PathBuf,
    pub partitions_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub pr_curve_csv: PathBuf,
    pub plots_dir: PathBuf,
}

impl OutPaths {
    pub fn new(rc: &RunConfig) -> OutPaths {
        let out = PathBuf::from(&rc.paths.out_dir);
        OutPaths {
            features_csv: out.join("features.csv"),
            np_csv: out.join("np.csv"),
            tuned_json: out.join("tuned.json"),
            model_json: out.join("model.json"),
            predictions_csv: out.join("predictions.csv"),
            partitions_csv: out.join("partitions.csv"),
            metrics_json: out.join("metrics.json"),
            pr_curve_csv: out.join("pr_curve.csv"),
            plots_dir: out.join("plots"),
            out_dir: out,
        }
    }

    pub fn ensure_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

/// Deterministic 20%/80% tuning/validation split over pair indices.
pub fn split_pairs(n_pairs: usize, tuning_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut idx: Vec<usize> = (0..n_pairs).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let n_tuning = ((n_pairs as f64 * tuning_fraction).round() as usize).clamp(1, n_pairs - 1);
    let mut tuning = idx[..n_tuning].to_vec();
    let mut validation = idx[n_tuning..].to_vec();
    tuning.sort_unstable();
    validation.sort_unstable();
    (tuning, validation)
}

/// `count(label=0) / count(label=1)` over the table rows.
pub fn auto_positive_weight(labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    Ok((labels.len() - pos) as f64 / pos as f64)
}

/// Generate a synthetic session and write it as a session directory.
pub fn step_simulate(rc: &RunConfig) -> Result<SessionDataset> {
    let ds = simulate(&rc.scenario_config())?;
    write_session(&ds, &rc.paths.data_dir)?;
    Ok(ds)
}

/// Ingest, preprocess and write the feature table plus the NP baseline.
pub fn step_features(rc: &RunConfig) -> Result<PairFeatureTable> {
    let paths = OutPaths::new(rc);
    paths.ensure_dir()?;
    let ds = ingest_session(&rc.paths.data_dir)?;
    let grid = ds
        .labels
        .clone()
        .ok_or_else(|| Error::InputMissing("labels.csv (ground truth)".into()))?;
    let clean = preprocess(&ds, &rc.preprocess_config())?;
    let table = build_feature_table(
        &clean,
        &grid,
        &ds.participants,
        &rc.feature_groups()?,
        &rc.feature_params(),
    );
    export_csv(&table, &paths.features_csv)?;

    // Normalized-proximity baseline, same row order as the table.
    let distances: Vec<Vec<f64>> = (0..table.pair_keys.len())
        .map(|p| (0..table.duration_s).map(|s| clean.pair_distance(p, s)).collect())
        .collect();
    let np = NormalizedProximity::fit(distances.iter().flatten().copied())?;
    let mut w = BufWriter::new(File::create(&paths.np_csv)?);
    writeln!(w, "pair_id,second,np")?;
    for (p, name) in table.pair_names.iter().enumerate() {
        for s in 0..table.duration_s {
            writeln!(w, "{name},{s},{}", np.score(distances[p][s]))?;
        }
    }
    Ok(table)
}

fn participant_ids(rc: &RunConfig) -> Result<Vec<String>> {
    Ok(read_metadata_file(&rc.paths.data_dir)?
        .into_iter()
        .map(|m| m.participant_id)
        .collect())
}

fn load_table(rc: &RunConfig) -> Result<PairFeatureTable> {
    let paths = OutPaths::new(rc);
    import_csv(&paths.features_csv, &participant_ids(rc)?)
}

fn read_np_csv(path: &Path, table: &PairFeatureTable) -> Result<Vec<f64>> {
    if !path.exists() {
        return Err(Error::InputMissing(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::with_capacity(table.n_rows());
    for record in reader.records() {
        let record = record?;
        out.push(record[2].parse::<f64>().map_err(|_| Error::MalformedRow {
            path: path.display().to_string(),
            line: record.position().map(|p| p.line()).unwrap_or(0),
            reason: format!("bad np value {:?}", &record[2]),
        })?);
    }
    if out.len() != table.n_rows() {
        return Err(Error::ConfigInvalid(format!(
            "np.csv has {} rows but the feature table has {}",
            out.len(),
            table.n_rows()
        )));
    }
    Ok(out)
}

/// Grid search on the tuning pairs.
pub fn step_tune(rc: &RunConfig) -> Result<TunedFile> {
    let paths = OutPaths::new(rc);
    let table = load_table(rc)?;
    let w = auto_positive_weight(&table.labels)?;
    let (tuning, _) = split_pairs(
        table.pair_keys.len(),
        rc.eval.tuning_fraction,
        rc.seed_split(),
    );
    let outcome = grid_search(
        &table,
        &tuning,
        &rc.gbdt_config(w),
        &rc.param_grid(),
        rc.eval.tuning_cv_folds,
        rc.seed_tune(),
    )?;
    let tuned = TunedFile {
        best: outcome.best,
        best_ap: outcome.best_ap,
        evaluated: outcome.evaluated,
    };
    tuned.save(&paths.tuned_json)?;
    Ok(tuned)
}

/// Train the deployable model on every validation-pair row, using the tuned
/// configuration when `tuned.json` exists.
pub fn step_train(rc: &RunConfig) -> Result<GbdtModel<f64>> {
    let paths = OutPaths::new(rc);
    let table = load_table(rc)?;
    let w = auto_positive_weight(&table.labels)?;
    let cfg = if paths.tuned_json.exists() {
        let mut best = TunedFile::load(&paths.tuned_json)?.best;
        best.positive_weight = w;
        best
    } else {
        rc.gbdt_config(w)
    };
    let (_, validation) = split_pairs(
        table.pair_keys.len(),
        rc.eval.tuning_fraction,
        rc.seed_split(),
    );
    let rows: Vec<u32> = validation
        .iter()
        .flat_map(|&p| {
            (p * table.duration_s) as u32..((p + 1) * table.duration_s) as u32
        })
        .collect();
    let names: Vec<String> = table.schema.names().map(str::to_string).collect();
    let model = fit(&table.columns, &names, &table.labels, &rows, &cfg)?;
    model.save(&paths.model_json)?;
    Ok(model)
}

/// Per-row predictions for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutput {
    pub pair_names: Vec<String>,
    pub duration_s: usize,
    pub labels: Vec<u8>,
    /// Test fold per pair; -1 marks a tuning pair (scored by the final
    /// model, which never trained on it).
    pub fold_of_pair: Vec<i32>,
    pub p_gbdt: Vec<f64>,
    pub p_np: Vec<f64>,
}

impl PredictOutput {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    /// Row indices of validation pairs (out-of-fold predictions).
    pub fn validation_rows(&self) -> Vec<usize> {
        self.rows_where(|f| f >= 0)
    }

    pub fn tuning_rows(&self) -> Vec<usize> {
        self.rows_where(|f| f < 0)
    }

    fn rows_where(&self, keep: impl Fn(i32) -> bool) -> Vec<usize> {
        let mut rows = Vec::new();
        for (p, &f) in self.fold_of_pair.iter().enumerate() {
            if keep(f) {
                rows.extend(p * self.duration_s..(p + 1) * self.duration_s);
            }
        }
        rows
    }

    /// `[second][pair]` probability matrix for graph building.
    pub fn per_second(&self, scores: &[f64]) -> Vec<Vec<f64>> {
        let n_pairs = self.pair_names.len();
        (0..self.duration_s)
            .map(|s| (0..n_pairs).map(|p| scores[p * self.duration_s + s]).collect())
            .collect()
    }
}

/// Out-of-fold predictions for validation pairs plus final-model scores for
/// tuning pairs; writes `predictions.csv`.
pub fn step_predict(rc: &RunConfig) -> Result<PredictOutput> {
    let paths = OutPaths::new(rc);
    let table = load_table(rc)?;
    let p_np = read_np_csv(&paths.np_csv, &table)?;
    let model: GbdtModel<f64> = GbdtModel::load(&paths.model_json)?;
    let table_names: Vec<String> = table.schema.names().map(str::to_string).collect();
    if model.feature_names != table_names {
        return Err(Error::SchemaMismatch {
            expected: model.feature_names.len(),
            got: table_names.len(),
        });
    }
    let (tuning, validation) = split_pairs(
        table.pair_keys.len(),
        rc.eval.tuning_fraction,
        rc.seed_split(),
    );
    let cv = cross_validate(
        &table,
        &validation,
        &model.config,
        rc.eval.cv_folds,
        rc.seed_cv(),
    )?;
    let mut p_gbdt = cv.proba;
    for &p in &tuning {
        for s in 0..table.duration_s {
            let r = p * table.duration_s + s;
            let z = crate::gbdt::predict_logit_cols(&model, &table.columns, r);
            p_gbdt[r] = clamp_probability(sigmoid(z));
        }
    }

    let out = PredictOutput {
        pair_names: table.pair_names.clone(),
        duration_s: table.duration_s,
        labels: table.labels.clone(),
        fold_of_pair: cv.fold_of_pair,
        p_gbdt,
        p_np,
    };
    let mut w = BufWriter::new(File::create(&paths.predictions_csv)?);
    writeln!(w, "pair_id,second,label,fold,p_gbdt,p_np")?;
    for (p, name) in out.pair_names.iter().enumerate() {
        for s in 0..out.duration_s {
            let r = p * out.duration_s + s;
            writeln!(
                w,
                "{name},{s},{},{},{},{}",
                out.labels[r], out.fold_of_pair[p], out.p_gbdt[r], out.p_np[r]
            )?;
        }
    }
    Ok(out)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<PredictOutput> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::InputMissing(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut pair_names: Vec<String> = Vec::new();
    let mut fold_of_pair: Vec<i32> = Vec::new();
    let mut labels = Vec::new();
    let mut p_gbdt = Vec::new();
    let mut p_np = Vec::new();
    let mut duration_s = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::MalformedRow {
            path: path.display().to_string(),
            line,
            reason,
        };
        let name = &record[0];
        if pair_names.last().map(String::as_str) != Some(name) {
            pair_names.push(name.to_string());
            fold_of_pair.push(
                record[3]
                    .parse()
                    .map_err(|_| bad(format!("bad fold {:?}", &record[3])))?,
            );
        }
        let second: usize = record[1]
            .parse()
            .map_err(|_| bad(format!("bad second {:?}", &record[1])))?;
        duration_s = duration_s.max(second + 1);
        labels.push(
            record[2]
                .parse()
                .map_err(|_| bad(format!("bad label {:?}", &record[2])))?,
        );
        p_gbdt.push(
            record[4]
                .parse()
                .map_err(|_| bad(format!("bad p_gbdt {:?}", &record[4])))?,
        );
        p_np.push(
            record[5]
                .parse()
                .map_err(|_| bad(format!("bad p_np {:?}", &record[5])))?,
        );
    }
    if labels.len() != pair_names.len() * duration_s {
        return Err(Error::ConfigInvalid(
            "predictions.csv is not a full (pair, second) grid".into(),
        ));
    }
    Ok(PredictOutput {
        pair_names,
        duration_s,
        labels,
        fold_of_pair,
        p_gbdt,
        p_np,
    })
}

/// Community partitions per second at one resolution; writes
/// `partitions.csv`.
pub fn step_groups(rc: &RunConfig, resolution: f64) -> Result<PathBuf> {
    let paths = OutPaths::new(rc);
    let pred = read_predictions(&paths.predictions_csv)?;
    let meta = read_metadata_file(&rc.paths.data_dir)?;
    let n = meta.len();
    if n * (n - 1) / 2 != pair_count_of(&pred) {
        return Err(Error::ConfigInvalid(format!(
            "predictions cover {} pairs but metadata lists {n} participants",
            pair_count_of(&pred)
        )));
    }
    let probs = pred.per_second(&pred.p_gbdt);
    let seed = rc.seed_louvain();
    let partitions: Vec<Vec<u32>> = probs
        .par_iter()
        .enumerate()
        .map(|(s, row)| {
            let graph = build_graph(n, row, rc.eval.edge_floor, s);
            louvain(&graph, resolution, seed.wrapping_add(s as u64)).community_of
        })
        .collect();
    let mut w = BufWriter::new(File::create(&paths.partitions_csv)?);
    writeln!(w, "second,participant_id,community_id")?;
    for (s, communities) in partitions.iter().enumerate() {
        for (v, c) in communities.iter().enumerate() {
            writeln!(w, "{s},{},{c}", meta[v].participant_id)?;
        }
    }
    Ok(paths.partitions_csv)
}

fn pair_count_of(pred: &PredictOutput) -> usize {
    pred.pair_names.len()
}

/// Link-, node- and group-level metrics; writes `metrics.json` and
/// `pr_curve.csv`.
pub fn step_evaluate(rc: &RunConfig) -> Result<Metrics> {
    let paths = OutPaths::new(rc);
    let pred = read_predictions(&paths.predictions_csv)?;
    let meta = read_metadata_file(&rc.paths.data_dir)?;
    let (_, grid) = read_label_grid(&rc.paths.data_dir, &meta, pred.duration_s)?;

    let gather = |rows: &[usize], src: &[f64]| -> Vec<f64> {
        rows.iter().map(|&r| src[r]).collect()
    };
    let gather_labels =
        |rows: &[usize]| -> Vec<u8> { rows.iter().map(|&r| pred.labels[r]).collect() };

    let val_rows = pred.validation_rows();
    let val_labels = gather_labels(&val_rows);
    let val_gbdt = gather(&val_rows, &pred.p_gbdt);
    let val_np = gather(&val_rows, &pred.p_np);
    let val_npc = npc_baseline::<f64>(&val_labels);

    let curve_gbdt = pr_curve(&val_gbdt, &val_labels)?;
    let curve_np = pr_curve(&val_np, &val_labels)?;
    let curve_npc = pr_curve(&val_npc, &val_labels)?;
    write_pr_curves(
        &paths.pr_curve_csv,
        &[
            ("gbdt", &curve_gbdt),
            ("np", &curve_np),
            ("npc", &curve_npc),
        ],
    )?;

    // Operating thresholds come from the tuning subset.
    let tune_rows = pred.tuning_rows();
    let tune_labels = gather_labels(&tune_rows);
    let (threshold_rows, threshold_labels, threshold_source) =
        if tune_labels.iter().any(|&y| y == 1) {
            (tune_rows, tune_labels, "tuning")
        } else {
            (val_rows.clone(), val_labels.clone(), "validation_fallback")
        };
    let threshold_gbdt = select_threshold(
        &gather(&threshold_rows, &pred.p_gbdt),
        &threshold_labels,
        rc.eval.f_beta,
    )?;
    let threshold_np = select_threshold(
        &gather(&threshold_rows, &pred.p_np),
        &threshold_labels,
        rc.eval.f_beta,
    )?;

    let confusion_gbdt = confusion(&val_gbdt, &val_labels, threshold_gbdt);
    let confusion_np = confusion(&val_np, &val_labels, threshold_np);

    let sweep_gbdt = sweep_resolution(
        &pred.per_second(&pred.p_gbdt),
        &grid,
        &rc.eval.gamma_grid,
        rc.eval.edge_floor,
        2,
        rc.seed_louvain(),
    );
    let sweep_np = sweep_resolution(
        &pred.per_second(&pred.p_np),
        &grid,
        &rc.eval.gamma_grid,
        rc.eval.edge_floor,
        2,
        rc.seed_louvain(),
    );
    let best_gbdt = *best_resolution(&sweep_gbdt).expect("non-empty gamma grid");
    let best_np = *best_resolution(&sweep_np).expect("non-empty gamma grid");

    let ablation_points = if rc.eval.ablation {
        let table = load_table(rc)?;
        let w = auto_positive_weight(&table.labels)?;
        let (tuning, validation) = split_pairs(
            table.pair_keys.len(),
            rc.eval.tuning_fraction,
            rc.seed_split(),
        );
        let base = if paths.tuned_json.exists() {
            let mut best = TunedFile::load(&paths.tuned_json)?.best;
            best.positive_weight = w;
            best
        } else {
            rc.gbdt_config(w)
        };
        Some(ablation(
            &table,
            &validation,
            &tuning,
            &base,
            rc.eval.cv_folds,
            rc.seed_cv(),
            None,
        )?)
    } else {
        None
    };

    let n_pos = pred.labels.iter().filter(|&&y| y == 1).count();
    let metrics = Metrics {
        seed: rc.run.seed,
        n_participants: meta.len(),
        n_pairs: pred.pair_names.len(),
        duration_s: pred.duration_s,
        n_rows: pred.n_rows(),
        n_validation_rows: val_rows.len(),
        prevalence: n_pos as f64 / pred.n_rows() as f64,
        positive_weight: auto_positive_weight(&pred.labels)?,
        ap_gbdt: curve_gbdt.ap,
        ap_np: curve_np.ap,
        ap_npc: curve_npc.ap,
        threshold_gbdt,
        threshold_np,
        threshold_source: threshold_source.to_string(),
        confusion_gbdt,
        confusion_np,
        resolution_sweep_gbdt: sweep_gbdt,
        resolution_sweep_np: sweep_np,
        best_gamma_gbdt: best_gbdt.gamma,
        best_node_accuracy_gbdt: best_gbdt.node_accuracy,
        best_group_accuracy_gbdt: best_gbdt.group_accuracy,
        best_gamma_np: best_np.gamma,
        best_node_accuracy_np: best_np.node_accuracy,
        best_group_accuracy_np: best_np.group_accuracy,
        ablation: ablation_points,
    };
    metrics.save(&paths.metrics_json)?;
    Ok(metrics)
}

/// Render the SVG figures from the saved metrics.
pub fn step_report(rc: &RunConfig) -> Result<Vec<PathBuf>> {
    let paths = OutPaths::new(rc);
    let metrics = Metrics::load(&paths.metrics_json)?;
    let curves = crate::report::read_pr_curves(&paths.pr_curve_csv)?;
    crate::report::render_figures(&metrics, &curves, &paths.plots_dir)
}

/// The whole chain: simulate, features, tune, train, predict, groups,
/// evaluate, report.
pub fn run_pipeline(rc: &RunConfig) -> Result<Metrics> {
    step_simulate(rc)?;
    step_features(rc)?;
    step_tune(rc)?;
    step_train(rc)?;
    step_predict(rc)?;
    step_groups(rc, rc.eval.partition_gamma)?;
    let metrics = step_evaluate(rc)?;
    step_report(rc)?;
    Ok(metrics)
}

/// Extract detected groups at one second (used by callers that want the
/// member sets rather than the raw partition).
pub fn detect_groups_at(
    probabilities: &[f64],
    n_participants: usize,
    edge_floor: f64,
    resolution: f64,
    seed: u64,
    second: usize,
) -> crate::community::ExtractedGroups {
    let graph = build_graph(n_participants, probabilities, edge_floor, second);
    let partition = louvain(&graph, resolution, seed.wrapping_add(second as u64));
    extract_groups(&partition, 2)
}
