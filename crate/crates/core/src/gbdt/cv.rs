//! Pair-wise cross-validation and hyper-parameter grid search.
//!
//! Splitting is always by participant pair: all rows of a pair land in the
//! same fold, so a model never sees its test pairs during training.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::average_precision;
use crate::features::PairFeatureTable;

use super::train::predict_logit_cols;
use super::{clamp_probability, fit, sigmoid, GbdtConfig};

/// Out-of-fold predictions from a pair-wise k-fold run.
#[derive(Debug, Clone)]
pub struct CvPredictions {
    /// Probability per table row; NaN for rows of pairs outside the subset.
    pub proba: Vec<f64>,
    /// Test-fold index per pair; -1 for pairs outside the subset.
    pub fold_of_pair: Vec<i32>,
}

/// Shuffle the pairs and cut them into k folds; the first `n % k` folds get
/// the extra pair.
pub fn pair_folds(pair_subset: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if pair_subset.len() < k || k == 0 {
        return Err(Error::TooFewPairs {
            pairs: pair_subset.len(),
            folds: k,
        });
    }
    let mut shuffled = pair_subset.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..shuffled.len()).rev() {
        let j = rng.random_range(0..=i);
        shuffled.swap(i, j);
    }
    let n = shuffled.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(shuffled[at..at + size].to_vec());
        at += size;
    }
    Ok(folds)
}

fn rows_of_pairs(table: &PairFeatureTable, pairs: &[usize]) -> Vec<u32> {
    let t = table.duration_s;
    let mut rows = Vec::with_capacity(pairs.len() * t);
    for &p in pairs {
        rows.extend((p * t) as u32..((p + 1) * t) as u32);
    }
    rows
}

/// k-fold cross-validation over the given pairs with a fixed configuration.
///
/// Returns one out-of-fold probability per row of the subset pairs. Folds
/// train and predict independently, so the result does not depend on the
/// number of worker threads.
pub fn cross_validate(
    table: &PairFeatureTable,
    pair_subset: &[usize],
    cfg: &GbdtConfig,
    k: usize,
    seed: u64,
) -> Result<CvPredictions> {
    let folds = pair_folds(pair_subset, k, seed)?;
    let fold_results: Vec<Result<Vec<(u32, f64)>>> = folds
        .par_iter()
        .map(|test_pairs| {
            let train_pairs: Vec<usize> = pair_subset
                .iter()
                .copied()
                .filter(|p| !test_pairs.contains(p))
                .collect();
            let train_rows = rows_of_pairs(table, &train_pairs);
            // A fold whose training pairs are all one class cannot boost;
            // it degrades to the constant prior predictor.
            let n_pos = train_rows
                .iter()
                .filter(|&&r| table.labels[r as usize] == 1)
                .count();
            let model = if n_pos == 0 || n_pos == train_rows.len() {
                let prior =
                    (n_pos as f64 / train_rows.len().max(1) as f64).clamp(1e-6, 1.0 - 1e-6);
                super::GbdtModel {
                    version: super::MODEL_FORMAT_VERSION,
                    config: GbdtConfig {
                        base_score: prior,
                        ..cfg.clone()
                    },
                    feature_names: schema_names(table),
                    trees: vec![],
                }
            } else {
                fit(
                    &table.columns,
                    &schema_names(table),
                    &table.labels,
                    &train_rows,
                    cfg,
                )?
            };
            let out = rows_of_pairs(table, test_pairs)
                .into_iter()
                .map(|r| {
                    let z = predict_logit_cols(&model, &table.columns, r as usize);
                    (r, clamp_probability(sigmoid(z)))
                })
                .collect();
            Ok(out)
        })
        .collect();

    let mut proba = vec![f64::NAN; table.n_rows()];
    let mut fold_of_pair = vec![-1i32; table.pair_keys.len()];
    for (f, result) in fold_results.into_iter().enumerate() {
        for (r, p) in result? {
            proba[r as usize] = p;
        }
        for &pair in &folds[f] {
            fold_of_pair[pair] = f as i32;
        }
    }
    Ok(CvPredictions {
        proba,
        fold_of_pair,
    })
}

fn schema_names(table: &PairFeatureTable) -> Vec<String> {
    table.schema.names().map(str::to_string).collect()
}

/// Hyper-parameter grid; the default is the full tuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub max_depth: Vec<usize>,
    pub colsample_bytree: Vec<f64>,
    pub subsample: Vec<f64>,
    pub learning_rate: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            max_depth: vec![4, 6, 8, 10],
            colsample_bytree: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            subsample: vec![0.5, 0.75, 1.0],
            learning_rate: vec![0.01, 0.05, 0.1],
        }
    }
}

impl ParamGrid {
    pub fn len(&self) -> usize {
        self.max_depth.len()
            * self.colsample_bytree.len()
            * self.subsample.len()
            * self.learning_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination, in the canonical nesting order.
    pub fn combinations(&self, base: &GbdtConfig) -> Vec<GbdtConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &depth in &self.max_depth {
            for &colsample in &self.colsample_bytree {
                for &subsample in &self.subsample {
                    for &lr in &self.learning_rate {
                        out.push(GbdtConfig {
                            max_depth: depth,
                            colsample_bytree: colsample,
                            subsample,
                            learning_rate: lr,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub max_depth: usize,
    pub colsample_bytree: f64,
    pub subsample: f64,
    pub learning_rate: f64,
    pub ap: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: GbdtConfig,
    pub best_ap: f64,
    pub evaluated: Vec<GridPoint>,
}

/// Evaluate every grid combination with internal pair-wise k-fold CV on the
/// tuning pairs and return the configuration with the best pooled
/// average precision. Ties break to smaller depth, then smaller learning
/// rate, then grid order.
pub fn grid_search(
    table: &PairFeatureTable,
    tuning_pairs: &[usize],
    base: &GbdtConfig,
    grid: &ParamGrid,
    k: usize,
    seed: u64,
) -> Result<GridSearchOutcome> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let configs = grid.combinations(base);
    // The same folds for every configuration keeps the comparison fair.
    let tuning_rows = rows_of_pairs(table, tuning_pairs);
    let tuning_labels: Vec<u8> = tuning_rows
        .iter()
        .map(|&r| table.labels[r as usize])
        .collect();

    let aps: Vec<Result<f64>> = configs
        .par_iter()
        .map(|cfg| {
            let cv = cross_validate(table, tuning_pairs, cfg, k, seed)?;
            let scores: Vec<f64> = tuning_rows
                .iter()
                .map(|&r| cv.proba[r as usize])
                .collect();
            average_precision(&scores, &tuning_labels)
        })
        .collect();

    let mut evaluated = Vec::with_capacity(configs.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, ap) in aps.into_iter().enumerate() {
        let ap = ap?;
        let cfg = &configs[i];
        evaluated.push(GridPoint {
            max_depth: cfg.max_depth,
            colsample_bytree: cfg.colsample_bytree,
            subsample: cfg.subsample,
            learning_rate: cfg.learning_rate,
            ap,
        });
        let better = match best {
            None => true,
            Some((bi, bap)) => {
                let b = &configs[bi];
                ap > bap
                    || (ap == bap
                        && (cfg.max_depth < b.max_depth
                            || (cfg.max_depth == b.max_depth
                                && cfg.learning_rate < b.learning_rate)))
            }
        };
        if better {
            best = Some((i, ap));
        }
    }
    let (bi, best_ap) = best.unwrap();
    Ok(GridSearchOutcome {
        best: configs[bi].clone(),
        best_ap,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSchema, PairFeatureTable};
    use crate::model::all_pairs;

    /// A tiny synthetic table: one informative feature, `n_pairs` pairs,
    /// `t` seconds each.
    fn toy_table(n_participants: usize, t: usize, seed: u64) -> PairFeatureTable {
        let pairs = all_pairs(n_participants);
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut col = Vec::new();
        let mut noise = Vec::new();
        let mut labels = Vec::new();
        for _ in &pairs {
            // Half the pairs are "interacting" pairs with shifted scores.
            let interacting = next() < 0.5;
            for _ in 0..t {
                let v = if interacting { next() + 0.7 } else { next() };
                col.push(v);
                noise.push(next());
                labels.push(u8::from(interacting && next() < 0.9));
            }
        }
        let schema = FeatureSchema::build(
            &[crate::features::FeatureGroup::Interpersonal]
                .into_iter()
                .collect(),
            0,
        );
        // Keep only two slots to match our two columns.
        let slots = schema.slots[..2].to_vec();
        PairFeatureTable {
            schema: FeatureSchema::from_slots(slots),
            pair_names: pairs.iter().map(|p| format!("{};{}", p.a, p.b)).collect(),
            pair_keys: pairs,
            duration_s: t,
            columns: vec![col, noise],
            labels,
        }
    }

    #[test]
    fn fold_sizes_for_231_pairs() {
        let pairs: Vec<usize> = (0..231).collect();
        let folds = pair_folds(&pairs, 10, 1).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![23, 23, 23, 23, 23, 23, 23, 23, 23, 24]);
        // Every pair appears in exactly one fold.
        let mut seen = std::collections::BTreeSet::new();
        for fold in &folds {
            for &p in fold {
                assert!(seen.insert(p));
            }
        }
        assert_eq!(seen.len(), 231);
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let pairs: Vec<usize> = (0..4).collect();
        assert!(matches!(
            pair_folds(&pairs, 10, 0),
            Err(Error::TooFewPairs { pairs: 4, folds: 10 })
        ));
    }

    #[test]
    fn cross_validation_predicts_every_subset_row_once() {
        let table = toy_table(6, 30, 3); // 15 pairs
        let subset: Vec<usize> = (0..table.pair_keys.len()).collect();
        let cfg = GbdtConfig {
            n_trees: 5,
            max_depth: 2,
            min_child_weight: 0.1,
            positive_weight: 1.0,
            ..GbdtConfig::default()
        };
        let cv = cross_validate(&table, &subset, &cfg, 5, 7).unwrap();
        assert!(cv.proba.iter().all(|p| !p.is_nan()));
        assert!(cv.proba.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(cv.fold_of_pair.iter().all(|&f| (0..5).contains(&f)));
        // Deterministic.
        let cv2 = cross_validate(&table, &subset, &cfg, 5, 7).unwrap();
        assert_eq!(cv.proba, cv2.proba);
    }

    #[test]
    fn grid_of_one_returns_that_config() {
        let table = toy_table(5, 20, 4);
        let subset: Vec<usize> = (0..table.pair_keys.len()).collect();
        let grid = ParamGrid {
            max_depth: vec![3],
            colsample_bytree: vec![1.0],
            subsample: vec![1.0],
            learning_rate: vec![0.1],
        };
        let base = GbdtConfig {
            n_trees: 4,
            min_child_weight: 0.1,
            ..GbdtConfig::default()
        };
        let out = grid_search(&table, &subset, &base, &grid, 5, 2).unwrap();
        assert_eq!(out.best.max_depth, 3);
        assert_eq!(out.evaluated.len(), 1);
    }

    #[test]
    fn equal_ap_ties_break_to_smaller_depth() {
        // One constant feature: every configuration predicts a constant,
        // so all APs are equal and the tie rule decides.
        let pairs = all_pairs(4);
        let t = 10;
        let n_rows = pairs.len() * t;
        let labels: Vec<u8> = (0..n_rows).map(|i| u8::from(i % 7 == 0)).collect();
        let table = PairFeatureTable {
            schema: FeatureSchema::from_slots(vec![crate::features::SlotDef {
                name: "x".into(),
                group: crate::features::FeatureGroup::Interpersonal,
            }]),
            pair_names: pairs.iter().map(|p| format!("{};{}", p.a, p.b)).collect(),
            pair_keys: pairs,
            duration_s: t,
            columns: vec![vec![1.0; n_rows]],
            labels,
        };
        let subset: Vec<usize> = (0..table.pair_keys.len()).collect();
        let grid = ParamGrid {
            max_depth: vec![6, 4],
            colsample_bytree: vec![1.0],
            subsample: vec![1.0],
            learning_rate: vec![0.1, 0.05],
        };
        let out = grid_search(&table, &subset, &GbdtConfig::default(), &grid, 3, 5).unwrap();
        assert_eq!(out.best.max_depth, 4);
        assert_eq!(out.best.learning_rate, 0.05);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let table = toy_table(4, 5, 1);
        let grid = ParamGrid {
            max_depth: vec![],
            ..ParamGrid::default()
        };
        assert!(matches!(
            grid_search(
                &table,
                &(0..table.pair_keys.len()).collect::<Vec<_>>(),
                &GbdtConfig::default(),
                &grid,
                3,
                0
            ),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn paper_winning_config_is_in_the_default_grid() {
        let grid = ParamGrid::default();
        assert_eq!(grid.len(), 180);
        let combos = grid.combinations(&GbdtConfig::default());
        assert!(combos.iter().any(|c| c.max_depth == 4
            && c.colsample_bytree == 0.2
            && c.subsample == 0.5
            && c.learning_rate == 0.05));
    }
}
