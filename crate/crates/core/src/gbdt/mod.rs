//! Gradient-boosted regression trees with a logistic link.
//!
//! Exact greedy split finding over sorted present values, learned default
//! directions for missing values, per-tree row subsampling and feature
//! column sampling, and class-imbalance instance weighting. Training is
//! deterministic for a fixed seed.

mod cv;
mod train;

pub use cv::{cross_validate, grid_search, CvPredictions, GridPoint, GridSearchOutcome, ParamGrid};
pub use train::{fit, predict_logit_cols, training_loss};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Fraction of features drawn per tree.
    pub colsample_bytree: f64,
    /// Fraction of rows drawn per tree, without replacement.
    pub subsample: f64,
    pub learning_rate: f64,
    /// Instance weight applied to positive rows.
    pub positive_weight: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    /// L2 regularization on leaf weights.
    pub lambda: f64,
    /// Prior probability; the boosting starts from its logit.
    pub base_score: f64,
    pub rng_seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 50,
            max_depth: 4,
            colsample_bytree: 0.2,
            subsample: 0.5,
            learning_rate: 0.05,
            positive_weight: 1.0,
            min_child_weight: 1.0,
            lambda: 1.0,
            base_score: 0.5,
            rng_seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64, name: &str| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::ConfigInvalid(format!("{name} must be in (0, 1]")))
            }
        };
        frac(self.colsample_bytree, "colsample_bytree")?;
        frac(self.subsample, "subsample")?;
        if self.n_trees == 0 {
            return Err(Error::ConfigInvalid("n_trees must be >= 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::ConfigInvalid("max_depth must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::ConfigInvalid("learning_rate must be positive".into()));
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return Err(Error::ConfigInvalid("base_score must be in (0, 1)".into()));
        }
        if self.lambda < 0.0 || self.min_child_weight < 0.0 {
            return Err(Error::ConfigInvalid(
                "lambda and min_child_weight must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One tree node; the arena root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node<R> {
    Split {
        feature: u32,
        threshold: R,
        /// Where rows with a missing value go.
        default_left: bool,
        left: u32,
        right: u32,
    },
    Leaf { weight: R },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<R> {
    pub nodes: Vec<Node<R>>,
}

impl<R: Real> Tree<R> {
    /// Leaf value for a feature row; missing values follow the stored
    /// default direction.
    pub fn value(&self, row: &[R]) -> R {
        let mut at = 0u32;
        loop {
            match &self.nodes[at as usize] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = row[*feature as usize];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }
}

/// A trained ensemble plus the feature schema it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel<R> {
    pub version: u32,
    pub config: GbdtConfig,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree<R>>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Probabilities are clamped into this open interval so the logistic
/// gradient stays finite.
pub fn clamp_probability<R: Real>(p: R) -> R {
    let eps = R::of(1e-15);
    p.max(eps).min(R::one() - eps)
}

pub fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

pub fn logit<R: Real>(p: R) -> R {
    (p / (R::one() - p)).ln()
}

/// Gradient and hessian of the weighted logistic loss with respect to the
/// logit.
pub fn logistic_grad_hess<R: Real>(y: R, p: R, w: R) -> (R, R) {
    (w * (p - y), w * p * (R::one() - p))
}

/// Second-order gain of splitting a node into (L, R).
pub fn split_gain<R: Real>(g_l: R, h_l: R, g_r: R, h_r: R, lambda: R) -> R {
    let half = R::of(0.5);
    half * (g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda)
        - (g_l + g_r) * (g_l + g_r) / (h_l + h_r + lambda))
}

impl<R: Real> GbdtModel<R> {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Sum of the first `k` trees' contributions on top of the base logit.
    pub fn logit_prefix(&self, row: &[R], k: usize) -> R {
        let mut acc = R::of(logit(self.config.base_score));
        for tree in self.trees.iter().take(k) {
            acc += tree.value(row);
        }
        acc
    }

    pub fn predict_logit(&self, row: &[R]) -> R {
        self.logit_prefix(row, self.trees.len())
    }

    /// Interaction probability in the open interval (0, 1).
    pub fn predict_proba(&self, row: &[R]) -> Result<R> {
        if row.len() != self.feature_names.len() {
            return Err(Error::SchemaMismatch {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        Ok(clamp_probability(sigmoid(self.predict_logit(row))))
    }
}

impl<R: Real + Serialize + DeserializeOwned> GbdtModel<R> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GbdtModel<R>> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::InputMissing(path.display().to_string()));
        }
        let model: GbdtModel<R> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::ConfigInvalid(format!(
                "unsupported model format version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_hess_examples() {
        assert_eq!(logistic_grad_hess(1.0, 0.5, 1.0), (-0.5, 0.25));
        assert_eq!(logistic_grad_hess(0.0, 0.5, 1.0), (0.5, 0.25));
        // Weight scales both.
        assert_eq!(logistic_grad_hess(1.0, 0.5, 4.0), (-2.0, 1.0));
    }

    #[test]
    fn grad_matches_finite_differences() {
        // loss(z) = -w * [y ln p + (1 - y) ln(1 - p)], p = sigmoid(z)
        let loss = |y: f64, z: f64, w: f64| {
            let p: f64 = sigmoid(z);
            -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        };
        let mut state = 1234u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let y = if next() < 0.5 { 0.0 } else { 1.0 };
            let z = next() * 6.0 - 3.0;
            let w = 0.5 + next() * 3.0;
            let p = sigmoid(z);
            let (g, h) = logistic_grad_hess(y, p, w);
            let eps_g = 1e-5;
            let g_fd = (loss(y, z + eps_g, w) - loss(y, z - eps_g, w)) / (2.0 * eps_g);
            // The second difference needs a larger step or rounding noise
            // in eps^2 dominates.
            let eps_h = 5e-4;
            let h_fd = (loss(y, z + eps_h, w) + loss(y, z - eps_h, w) - 2.0 * loss(y, z, w))
                / (eps_h * eps_h);
            assert!((g - g_fd).abs() < 1e-6, "{g} vs {g_fd}");
            assert!((h - h_fd).abs() < 1e-6, "{h} vs {h_fd}");
        }
    }

    #[test]
    fn split_gain_examples() {
        // Perfect separation: strictly positive.
        assert!(split_gain(-3.0, 1.0, 3.0, 1.0, 1.0) > 0.0);
        // Symmetric null is exactly zero without regularization, and the
        // L2 term can only pull it below zero.
        assert_eq!(split_gain(2.0, 1.5, 2.0, 1.5, 0.0), 0.0);
        assert!(split_gain(2.0, 1.5, 2.0, 1.5, 1.0) <= 0.0);
    }

    #[test]
    fn split_gain_matches_independent_formula() {
        // Same algebra written differently.
        let reference = |gl: f64, hl: f64, gr: f64, hr: f64, la: f64| {
            let score = |g: f64, h: f64| g * g / (h + la);
            0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
        };
        let mut state = 77u64;
        let mut next = move || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let (gl, gr) = (next() * 10.0 - 5.0, next() * 10.0 - 5.0);
            let (hl, hr) = (next() * 5.0, next() * 5.0);
            let la = next() * 2.0;
            let got = split_gain(gl, hl, gr, hr, la);
            let want = reference(gl, hl, gr, hr, la);
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trees_predict_base_score() {
        let model: GbdtModel<f64> = GbdtModel {
            version: MODEL_FORMAT_VERSION,
            config: GbdtConfig {
                base_score: 0.37,
                ..GbdtConfig::default()
            },
            feature_names: vec!["x".into()],
            trees: vec![],
        };
        let p = model.predict_proba(&[0.0]).unwrap();
        assert!((p - 0.37).abs() < 1e-12);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let model: GbdtModel<f64> = GbdtModel {
            version: MODEL_FORMAT_VERSION,
            config: GbdtConfig::default(),
            feature_names: vec!["a".into(), "b".into()],
            trees: vec![],
        };
        assert!(matches!(
            model.predict_proba(&[1.0]),
            Err(Error::SchemaMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn tree_traversal_follows_default_direction() {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 1.0,
                    default_left: false,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { weight: -1.0 },
                Node::Leaf { weight: 2.0 },
            ],
        };
        assert_eq!(tree.value(&[0.0]), -1.0);
        assert_eq!(tree.value(&[5.0]), 2.0);
        assert_eq!(tree.value(&[f64::NAN]), 2.0);
    }

    #[test]
    fn model_json_round_trip() {
        let model: GbdtModel<f64> = GbdtModel {
            version: MODEL_FORMAT_VERSION,
            config: GbdtConfig::default(),
            feature_names: vec!["x".into()],
            trees: vec![Tree {
                nodes: vec![Node::Leaf { weight: 0.25 }],
            }],
        };
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("model.json");
        model.save(&path).unwrap();
        let back: GbdtModel<f64> = GbdtModel::load(&path).unwrap();
        assert_eq!(model, back);
    }
}
