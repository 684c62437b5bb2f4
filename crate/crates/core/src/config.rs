//! Run configuration: one TOML file with sections per subsystem.
//!
//! Every field has a default, so an empty file (or none at all) is a valid
//! configuration; command-line flags override the file.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureParams};
use crate::gbdt::{GbdtConfig, ParamGrid};
use crate::preprocess::PreprocessConfig;
use crate::proximity::PlmParams;
use crate::sim::{DropoutModel, OrientationAttenuation, ScenarioConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data_dir: String,
    pub out_dir: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            data_dir: "data/session".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlmSection {
    pub measured_power: f64,
    pub path_loss_exponent: f64,
    pub obstacle_loss: f64,
}

impl PlmSection {
    fn coin_default() -> Self {
        PlmSection {
            measured_power: -75.0,
            path_loss_exponent: 1.5,
            obstacle_loss: 0.0,
        }
    }

    fn ceiling_default() -> Self {
        PlmSection {
            measured_power: -62.0,
            ..Self::coin_default()
        }
    }

    pub fn params(&self) -> PlmParams<f64> {
        PlmParams::new(
            self.measured_power,
            self.path_loss_exponent,
            self.obstacle_loss,
        )
    }
}

impl Default for PlmSection {
    fn default() -> Self {
        Self::coin_default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n_participants: usize,
    pub duration_s: usize,
    pub n_ceiling: usize,
    pub rssi_noise_sigma: f64,
    pub ceiling_noise_sigma: f64,
    pub dropout_p: f64,
    pub spawn_rate: f64,
    pub walk_speed_mps: f64,
    pub sensitivity_floor: f64,
    pub quantize_rssi: bool,
    /// True channel path-loss exponents (the analysis still assumes the
    /// `[plm_coin]` / `[plm_ceiling]` parameters).
    pub channel_coin_exponent: f64,
    pub channel_ceiling_exponent: f64,
    /// Per-45-degree-bin body loss profile, dB (bin 0 faces the peer).
    pub attenuation_side_db: [f64; 8],
    /// Both bodies turned at least this far block the link entirely.
    pub attenuation_block_deg: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        SimulateSection {
            n_participants: d.n_participants,
            duration_s: d.duration_s,
            n_ceiling: d.n_ceiling,
            rssi_noise_sigma: d.rssi_noise_sigma,
            ceiling_noise_sigma: d.ceiling_noise_sigma,
            dropout_p: d.dropout.p_drop,
            spawn_rate: d.spawn_rate,
            walk_speed_mps: d.walk_speed_mps,
            sensitivity_floor: d.sensitivity_floor,
            quantize_rssi: d.quantize_rssi,
            channel_coin_exponent: d.coin_plm.path_loss_exponent,
            channel_ceiling_exponent: d.ceiling_plm.path_loss_exponent,
            attenuation_side_db: [0.0, 2.0, 7.0, 14.0, 20.0, 14.0, 7.0, 2.0],
            attenuation_block_deg: 135.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub window_s: usize,
    pub max_lag_s: f64,
    pub lag_step_s: f64,
    pub move_threshold_g: f64,
    /// Families included in the model schema.
    pub groups: Vec<String>,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            window_s: 10,
            max_lag_s: 5.0,
            lag_step_s: 0.1,
            move_threshold_g: 0.15,
            groups: vec![
                "interpersonal".into(),
                "device_position".into(),
                "motion".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtSection {
    pub n_trees: usize,
    pub max_depth: usize,
    pub colsample_bytree: f64,
    pub subsample: f64,
    pub learning_rate: f64,
    /// 0 means auto: count(negatives) / count(positives) of the grid.
    pub positive_weight: f64,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub base_score: f64,
}

impl Default for GbdtSection {
    fn default() -> Self {
        GbdtSection {
            n_trees: 50,
            max_depth: 4,
            colsample_bytree: 0.2,
            subsample: 0.5,
            learning_rate: 0.05,
            positive_weight: 0.0,
            min_child_weight: 1.0,
            lambda: 1.0,
            base_score: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub max_depth: Option<Vec<usize>>,
    pub colsample_bytree: Option<Vec<f64>>,
    pub subsample: Option<Vec<f64>>,
    pub learning_rate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub cv_folds: usize,
    pub tuning_fraction: f64,
    pub tuning_cv_folds: usize,
    pub f_beta: f64,
    pub edge_floor: f64,
    pub gamma_grid: Vec<f64>,
    /// Resolution used by the `groups` step inside `pipeline`.
    pub partition_gamma: f64,
    /// Also run the leave-one-family-out ablation during evaluate.
    pub ablation: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            cv_folds: 10,
            tuning_fraction: 0.2,
            tuning_cv_folds: 5,
            f_beta: 1.0,
            edge_floor: 0.05,
            gamma_grid: crate::eval::default_gamma_grid(),
            partition_gamma: 0.5,
            ablation: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// 0 = one worker per core.
    pub jobs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 7, jobs: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsSection,
    pub plm_coin: PlmSection,
    pub plm_ceiling: PlmSection,
    pub simulate: SimulateSection,
    pub features: FeaturesSection,
    pub gbdt: GbdtSection,
    pub grid: GridSection,
    pub eval: EvalSection,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsSection::default(),
            plm_coin: PlmSection::coin_default(),
            plm_ceiling: PlmSection::ceiling_default(),
            simulate: SimulateSection::default(),
            features: FeaturesSection::default(),
            gbdt: GbdtSection::default(),
            grid: GridSection::default(),
            eval: EvalSection::default(),
            run: RunSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gbdt_config(1.0).validate()?;
        if !(self.eval.tuning_fraction > 0.0 && self.eval.tuning_fraction < 1.0) {
            return Err(Error::ConfigInvalid(
                "eval.tuning_fraction must be in (0, 1)".into(),
            ));
        }
        if self.eval.cv_folds < 2 || self.eval.tuning_cv_folds < 2 {
            return Err(Error::ConfigInvalid("cv fold counts must be >= 2".into()));
        }
        if self.eval.gamma_grid.is_empty() {
            return Err(Error::ConfigInvalid("eval.gamma_grid is empty".into()));
        }
        if !(self.eval.edge_floor >= 0.0 && self.eval.edge_floor <= 1.0) {
            return Err(Error::ConfigInvalid("eval.edge_floor must be in [0, 1]".into()));
        }
        if self.features.window_s == 0 {
            return Err(Error::ConfigInvalid("features.window_s must be >= 1".into()));
        }
        if !(self.features.max_lag_s > 0.0 && self.features.lag_step_s > 0.0) {
            return Err(Error::ConfigInvalid(
                "features.max_lag_s and lag_step_s must be positive".into(),
            ));
        }
        if self.feature_groups()?.is_empty() {
            return Err(Error::ConfigInvalid("features.groups is empty".into()));
        }
        if !(self.simulate.dropout_p >= 0.0 && self.simulate.dropout_p < 1.0) {
            return Err(Error::ConfigInvalid(
                "simulate.dropout_p must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn feature_groups(&self) -> Result<BTreeSet<FeatureGroup>> {
        self.features
            .groups
            .iter()
            .map(|name| {
                FeatureGroup::parse(name).ok_or_else(|| {
                    Error::ConfigInvalid(format!("unknown feature group {name:?}"))
                })
            })
            .collect()
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            window_s: self.features.window_s,
            max_lag_s: self.features.max_lag_s,
            lag_step_s: self.features.lag_step_s,
            move_threshold_g: self.features.move_threshold_g,
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            target_hz: 100.0,
            coin_plm: self.plm_coin.params(),
            ceiling_plm: self.plm_ceiling.params(),
        }
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.simulate;
        ScenarioConfig {
            n_participants: s.n_participants,
            duration_s: s.duration_s,
            n_ceiling: s.n_ceiling,
            rssi_noise_sigma: s.rssi_noise_sigma,
            ceiling_noise_sigma: s.ceiling_noise_sigma,
            dropout: DropoutModel { p_drop: s.dropout_p },
            spawn_rate: s.spawn_rate,
            walk_speed_mps: s.walk_speed_mps,
            sensitivity_floor: s.sensitivity_floor,
            quantize_rssi: s.quantize_rssi,
            coin_plm: PlmParams::new(
                self.plm_coin.measured_power,
                s.channel_coin_exponent,
                self.plm_coin.obstacle_loss,
            ),
            ceiling_plm: PlmParams::new(
                self.plm_ceiling.measured_power,
                s.channel_ceiling_exponent,
                self.plm_ceiling.obstacle_loss,
            ),
            attenuation: OrientationAttenuation::from_side_profile(
                s.attenuation_side_db,
                s.attenuation_block_deg,
            ),
            rng_seed: self.run.seed,
            ..ScenarioConfig::default()
        }
    }

    pub fn gbdt_config(&self, positive_weight: f64) -> GbdtConfig {
        let g = &self.gbdt;
        GbdtConfig {
            n_trees: g.n_trees,
            max_depth: g.max_depth,
            colsample_bytree: g.colsample_bytree,
            subsample: g.subsample,
            learning_rate: g.learning_rate,
            positive_weight: if g.positive_weight > 0.0 {
                g.positive_weight
            } else {
                positive_weight
            },
            min_child_weight: g.min_child_weight,
            lambda: g.lambda,
            base_score: g.base_score,
            rng_seed: self.run.seed.wrapping_add(3),
        }
    }

    pub fn param_grid(&self) -> ParamGrid {
        let d = ParamGrid::default();
        ParamGrid {
            max_depth: self.grid.max_depth.clone().unwrap_or(d.max_depth),
            colsample_bytree: self
                .grid
                .colsample_bytree
                .clone()
                .unwrap_or(d.colsample_bytree),
            subsample: self.grid.subsample.clone().unwrap_or(d.subsample),
            learning_rate: self.grid.learning_rate.clone().unwrap_or(d.learning_rate),
        }
    }

    // Derived sub-seeds, one stream per concern.
    pub fn seed_split(&self) -> u64 {
        self.run.seed.wrapping_add(1)
    }

    pub fn seed_cv(&self) -> u64 {
        self.run.seed.wrapping_add(2)
    }

    pub fn seed_louvain(&self) -> u64 {
        self.run.seed.wrapping_add(4)
    }

    pub fn seed_tune(&self) -> u64 {
        self.run.seed.wrapping_add(5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_the_default_config() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.gbdt.n_trees, 50);
        assert_eq!(cfg.eval.gamma_grid.len(), 10);
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_override_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [run]
            seed = 99

            [simulate]
            n_participants = 6
            duration_s = 120

            [grid]
            max_depth = [2, 3]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.run.seed, 99);
        assert_eq!(cfg.simulate.n_participants, 6);
        assert_eq!(cfg.param_grid().max_depth, vec![2, 3]);
        // Unset grid axes fall back to the full default grid.
        assert_eq!(cfg.param_grid().learning_rate, vec![0.01, 0.05, 0.1]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let out: std::result::Result<RunConfig, _> = toml::from_str("[run]\nseeed = 3\n");
        assert!(out.is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.eval.tuning_fraction = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.features.groups = vec!["bogus".into()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn auto_positive_weight_threads_through() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.gbdt_config(15.85).positive_weight, 15.85);
        let mut pinned = RunConfig::default();
        pinned.gbdt.positive_weight = 3.0;
        assert_eq!(pinned.gbdt_config(15.85).positive_weight, 3.0);
    }
}
