//! Per-(pair, second) feature engineering.
//!
//! Feature families:
//!
//! * interpersonal space — mean and absolute difference of the two
//!   directional coin-beacon RSSI readings;
//! * device position — one-hot encoding of the two phone pockets;
//! * indoor positioning — per-ceiling-beacon absolute distance difference;
//! * motion — time-since-moving difference plus windowed cross-correlation
//!   peak/lag for each motion magnitude;
//! * past information — min/max/mean/std of every time-series feature over
//!   a trailing window.
//!
//! Missing values stay missing (NaN in memory, empty cells in CSV); the
//! learner handles them natively.

pub mod xcorr;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{all_pairs, LabelGrid, PairKey, ParticipantMeta, Pocket};
use crate::num::Real;
use crate::preprocess::CleanSession;
use xcorr::{XcorrBatch, XcorrParams};

/// A sensor family; ablations drop whole families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Interpersonal,
    DevicePosition,
    IndoorPositioning,
    Motion,
}

impl FeatureGroup {
    pub fn parse(s: &str) -> Option<FeatureGroup> {
        match s.trim().to_ascii_lowercase().as_str() {
            "interpersonal" => Some(FeatureGroup::Interpersonal),
            "device_position" => Some(FeatureGroup::DevicePosition),
            "indoor_positioning" => Some(FeatureGroup::IndoorPositioning),
            "motion" => Some(FeatureGroup::Motion),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureGroup::Interpersonal => "interpersonal",
            FeatureGroup::DevicePosition => "device_position",
            FeatureGroup::IndoorPositioning => "indoor_positioning",
            FeatureGroup::Motion => "motion",
        }
    }
}

/// The default model uses everything except the ceiling beacons.
pub fn default_groups() -> BTreeSet<FeatureGroup> {
    [
        FeatureGroup::Interpersonal,
        FeatureGroup::DevicePosition,
        FeatureGroup::Motion,
    ]
    .into_iter()
    .collect()
}

pub fn all_groups() -> BTreeSet<FeatureGroup> {
    [
        FeatureGroup::Interpersonal,
        FeatureGroup::DevicePosition,
        FeatureGroup::IndoorPositioning,
        FeatureGroup::Motion,
    ]
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDef {
    pub name: String,
    pub group: FeatureGroup,
}

/// Ordered feature slots: base features first, then the four window
/// statistics of every time-series base feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub slots: Vec<SlotDef>,
    n_base: usize,
}

impl FeatureSchema {
    /// Schema over explicit slots (e.g. re-read from a CSV header).
    pub fn from_slots(slots: Vec<SlotDef>) -> FeatureSchema {
        let n_base = slots.len();
        FeatureSchema { slots, n_base }
    }

    pub fn build(groups: &BTreeSet<FeatureGroup>, n_ceiling: usize) -> FeatureSchema {
        let mut base: Vec<(SlotDef, bool)> = Vec::new(); // (slot, is_time_series)
        let mut push = |name: String, group: FeatureGroup, ts: bool| {
            base.push((SlotDef { name, group }, ts));
        };
        if groups.contains(&FeatureGroup::Interpersonal) {
            push("prox_rssi_mean".into(), FeatureGroup::Interpersonal, true);
            push("prox_rssi_diff".into(), FeatureGroup::Interpersonal, true);
        }
        if groups.contains(&FeatureGroup::DevicePosition) {
            for pos in ["LL", "LR", "RL", "RR"] {
                push(
                    format!("device_position_{pos}"),
                    FeatureGroup::DevicePosition,
                    false,
                );
            }
        }
        if groups.contains(&FeatureGroup::IndoorPositioning) {
            for k in 1..=n_ceiling {
                push(
                    format!("ceiling_beacon_{k}_diff"),
                    FeatureGroup::IndoorPositioning,
                    true,
                );
            }
        }
        if groups.contains(&FeatureGroup::Motion) {
            push("time_since_moving_diff".into(), FeatureGroup::Motion, true);
            for sig in ["linear_acc", "gravity", "rotation_rate"] {
                push(format!("device_{sig}_ccf_lag"), FeatureGroup::Motion, true);
                push(format!("device_{sig}_ccf_max"), FeatureGroup::Motion, true);
            }
        }

        let mut slots: Vec<SlotDef> = base.iter().map(|(s, _)| s.clone()).collect();
        for (slot, ts) in &base {
            if *ts {
                for stat in ["min", "max", "mean", "std"] {
                    slots.push(SlotDef {
                        name: format!("{}_{stat}", slot.name),
                        group: slot.group,
                    });
                }
            }
        }
        FeatureSchema {
            n_base: base.len(),
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    /// Slot indices belonging to any of the given groups.
    pub fn indices_of_groups(&self, groups: &BTreeSet<FeatureGroup>) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| groups.contains(&s.group))
            .map(|(i, _)| i)
            .collect()
    }

    /// A copy with every slot of the given groups removed.
    pub fn without_groups(&self, drop: &BTreeSet<FeatureGroup>) -> FeatureSchema {
        let slots: Vec<SlotDef> = self
            .slots
            .iter()
            .filter(|s| !drop.contains(&s.group))
            .cloned()
            .collect();
        let n_base = self
            .slots
            .iter()
            .take(self.n_base)
            .filter(|s| !drop.contains(&s.group))
            .count();
        FeatureSchema { slots, n_base }
    }
}

/// Knobs for the windowed features.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeatureParams {
    /// Trailing window for cross-correlation and past-information stats.
    pub window_s: usize,
    /// Cross-correlation lag bound, seconds.
    pub max_lag_s: f64,
    /// Lag grid spacing, seconds.
    pub lag_step_s: f64,
    /// Linear-acceleration magnitude above this many g counts as moving.
    pub move_threshold_g: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            window_s: 10,
            max_lag_s: 5.0,
            lag_step_s: 0.1,
            move_threshold_g: 0.15,
        }
    }
}

/// Mean and absolute difference of the two directional RSSI readings.
pub fn interpersonal_features<R: Real>(rssi_ij: R, rssi_ji: R) -> (R, R) {
    (
        (rssi_ij + rssi_ji) / R::of(2.0),
        (rssi_ij - rssi_ji).abs(),
    )
}

/// One-hot pocket encoding for a pair in canonical orientation:
/// `[LL, LR, RL, RR]`.
pub fn device_position_onehot<R: Real>(pocket_i: Pocket, pocket_j: Pocket) -> [R; 4] {
    let idx = match (pocket_i, pocket_j) {
        (Pocket::Left, Pocket::Left) => 0,
        (Pocket::Left, Pocket::Right) => 1,
        (Pocket::Right, Pocket::Left) => 2,
        (Pocket::Right, Pocket::Right) => 3,
    };
    let mut out = [R::zero(); 4];
    out[idx] = R::one();
    out
}

/// Absolute per-beacon difference of two ceiling-distance vectors.
pub fn ceiling_diff<R: Real>(d_i: &[R], d_j: &[R]) -> Vec<R> {
    d_i.iter()
        .zip(d_j.iter())
        .map(|(&a, &b)| (a - b).abs())
        .collect()
}

/// Seconds since each participant last moved, from the 100 Hz
/// linear-acceleration magnitude. `moving[s]` is true when any sample in
/// second `s` exceeds the threshold.
pub fn moving_per_second(lin_acc_mag: &[f64], sample_rate: usize, threshold_g: f64) -> Vec<bool> {
    let duration = lin_acc_mag.len() / sample_rate;
    (0..duration)
        .map(|s| {
            lin_acc_mag[s * sample_rate..(s + 1) * sample_rate]
                .iter()
                .any(|&v| v > threshold_g)
        })
        .collect()
}

/// Time since moving per second: 0 while moving, growing by 1 per
/// stationary second; `s + 1` when the participant never moved.
pub fn time_since_moving(moving: &[bool]) -> Vec<f64> {
    let mut last_moving: i64 = -1;
    moving
        .iter()
        .enumerate()
        .map(|(s, &m)| {
            if m {
                last_moving = s as i64;
            }
            (s as i64 - last_moving) as f64
        })
        .collect()
}

/// `|tsm_i - tsm_j|`, Missing (NaN) when both are currently moving.
pub fn time_since_moving_diff(tsm_i: &[f64], tsm_j: &[f64]) -> Vec<f64> {
    tsm_i
        .iter()
        .zip(tsm_j.iter())
        .map(|(&a, &b)| {
            if a == 0.0 && b == 0.0 {
                f64::NAN
            } else {
                (a - b).abs()
            }
        })
        .collect()
}

/// Min, max, mean and population std of the present (non-NaN) values;
/// all-NaN input yields four NaNs. An all-equal window has std exactly 0.
pub fn past_window_stats<R: Real>(window: &[R]) -> (R, R, R, R) {
    let mut min = R::infinity();
    let mut max = R::neg_infinity();
    let mut sum = R::zero();
    let mut count = 0usize;
    for &v in window {
        if v.is_nan() {
            continue;
        }
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
        sum += v;
        count += 1;
    }
    if count == 0 {
        return (R::nan(), R::nan(), R::nan(), R::nan());
    }
    let mean = sum / R::of(count as f64);
    let std = if min == max {
        R::zero()
    } else {
        let mut ss = R::zero();
        for &v in window {
            if !v.is_nan() {
                ss += (v - mean) * (v - mean);
            }
        }
        (ss / R::of(count as f64)).sqrt()
    };
    (min, max, mean, std)
}

/// One labelled example table: rows are (pair, second), columns follow the
/// schema, NaN marks Missing.
#[derive(Debug, Clone)]
pub struct PairFeatureTable {
    pub schema: FeatureSchema,
    pub pair_keys: Vec<PairKey>,
    /// Canonical `"idA;idB"` names aligned with `pair_keys`.
    pub pair_names: Vec<String>,
    pub duration_s: usize,
    /// Column-major: `columns[slot][pair_idx * duration_s + second]`.
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl PairFeatureTable {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row_index(&self, pair_idx: usize, second: usize) -> usize {
        pair_idx * self.duration_s + second
    }

    pub fn pair_of_row(&self, row: usize) -> usize {
        row / self.duration_s
    }

    pub fn value(&self, row: usize, slot: usize) -> f64 {
        self.columns[slot][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Restrict to a subset of slots (ablation); row data is copied.
    pub fn with_slots(&self, keep: &[usize]) -> PairFeatureTable {
        let slots = keep.iter().map(|&i| self.schema.slots[i].clone()).collect();
        PairFeatureTable {
            schema: FeatureSchema::from_slots(slots),
            pair_keys: self.pair_keys.clone(),
            pair_names: self.pair_names.clone(),
            duration_s: self.duration_s,
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Drop whole feature families.
    pub fn without_groups(&self, drop: &BTreeSet<FeatureGroup>) -> PairFeatureTable {
        let keep: Vec<usize> = self
            .schema
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| !drop.contains(&s.group))
            .map(|(i, _)| i)
            .collect();
        self.with_slots(&keep)
    }
}

fn pair_name(meta: &[ParticipantMeta], pair: PairKey) -> String {
    format!(
        "{};{}",
        meta[pair.a as usize].participant_id, meta[pair.b as usize].participant_id
    )
}

/// Compute the full feature table for every (pair, second) of the grid.
pub fn build_feature_table(
    clean: &CleanSession,
    grid: &LabelGrid,
    meta: &[ParticipantMeta],
    groups: &BTreeSet<FeatureGroup>,
    params: &FeatureParams,
) -> PairFeatureTable {
    use rayon::prelude::*;

    let schema = FeatureSchema::build(groups, clean.n_ceiling);
    let t = clean.duration_s;
    let pairs = all_pairs(clean.n_participants());
    let sample_rate = clean.motion.first().map(|m| m.sample_rate as usize).unwrap_or(100);
    let xc_params = XcorrParams::from_seconds(
        sample_rate as f64,
        params.window_s as f64,
        params.max_lag_s,
        params.lag_step_s,
    );

    // Per-participant time-since-moving, shared by every pair.
    let tsm: Vec<Vec<f64>> = clean
        .motion
        .iter()
        .map(|m| {
            time_since_moving(&moving_per_second(
                &m.lin_acc_mag,
                sample_rate,
                params.move_threshold_g,
            ))
        })
        .collect();

    let n_slots = schema.len();
    let mut columns: Vec<Vec<f64>> = (0..n_slots).map(|_| vec![f64::NAN; pairs.len() * t]).collect();
    let mut labels = vec![0u8; pairs.len() * t];

    // One pair's feature block: per-slot arrays of length t.
    let build_pair = |pair_idx: usize| -> Vec<Vec<f64>> {
        let pair = pairs[pair_idx];
        let (a, b) = (pair.a as usize, pair.b as usize);
        let mut base: Vec<Vec<f64>> = Vec::new();
        let mut ts_flags: Vec<bool> = Vec::new();

        if groups.contains(&FeatureGroup::Interpersonal) {
            let c = &clean.coin[pair_idx];
            let mut mean = Vec::with_capacity(t);
            let mut diff = Vec::with_capacity(t);
            for s in 0..t {
                let (m, d) = interpersonal_features(c.rssi_ab[s], c.rssi_ba[s]);
                mean.push(m);
                diff.push(d);
            }
            base.push(mean);
            ts_flags.push(true);
            base.push(diff);
            ts_flags.push(true);
        }
        if groups.contains(&FeatureGroup::DevicePosition) {
            let onehot: [f64; 4] =
                device_position_onehot(meta[a].device_pocket, meta[b].device_pocket);
            for v in onehot {
                base.push(vec![v; t]);
                ts_flags.push(false);
            }
        }
        if groups.contains(&FeatureGroup::IndoorPositioning) {
            for k in 0..clean.n_ceiling {
                let di = &clean.ceiling_dist[a * clean.n_ceiling + k];
                let dj = &clean.ceiling_dist[b * clean.n_ceiling + k];
                base.push((0..t).map(|s| (di[s] - dj[s]).abs()).collect());
                ts_flags.push(true);
            }
        }
        if groups.contains(&FeatureGroup::Motion) {
            base.push(time_since_moving_diff(&tsm[a], &tsm[b]));
            ts_flags.push(true);
            let signals = [
                (&clean.motion[a].lin_acc_mag, &clean.motion[b].lin_acc_mag),
                (&clean.motion[a].gravity_mag, &clean.motion[b].gravity_mag),
                (
                    &clean.motion[a].rotation_rate_mag,
                    &clean.motion[b].rotation_rate_mag,
                ),
            ];
            for (x, y) in signals {
                let (max_r, lag_samples) = XcorrBatch::new(x, y, xc_params).run(sample_rate, t);
                let lag_s: Vec<f64> = lag_samples
                    .iter()
                    .map(|&l| l / sample_rate as f64)
                    .collect();
                base.push(lag_s);
                ts_flags.push(true);
                base.push(max_r);
                ts_flags.push(true);
            }
        }

        // Past-information stats over the trailing window.
        let mut block = base.clone();
        for (series, &ts) in base.iter().zip(ts_flags.iter()) {
            if !ts {
                continue;
            }
            let mut mins = Vec::with_capacity(t);
            let mut maxs = Vec::with_capacity(t);
            let mut means = Vec::with_capacity(t);
            let mut stds = Vec::with_capacity(t);
            for s in 0..t {
                let w0 = (s + 1).saturating_sub(params.window_s);
                let (mn, mx, me, sd) = past_window_stats(&series[w0..=s]);
                mins.push(mn);
                maxs.push(mx);
                means.push(me);
                stds.push(sd);
            }
            block.push(mins);
            block.push(maxs);
            block.push(means);
            block.push(stds);
        }
        block
    };

    // Pairs are independent; chunked parallel build, sequential copy-in.
    let chunk = 16;
    let mut pair_idx = 0;
    while pair_idx < pairs.len() {
        let hi = (pair_idx + chunk).min(pairs.len());
        let blocks: Vec<(usize, Vec<Vec<f64>>)> = (pair_idx..hi)
            .into_par_iter()
            .map(|i| (i, build_pair(i)))
            .collect();
        for (i, block) in blocks {
            debug_assert_eq!(block.len(), n_slots);
            for (slot, series) in block.into_iter().enumerate() {
                columns[slot][i * t..(i + 1) * t].copy_from_slice(&series);
            }
            for s in 0..t {
                labels[i * t + s] = grid.label(pairs[i], s) as u8;
            }
        }
        pair_idx = hi;
    }

    let pair_names = pairs.iter().map(|&p| pair_name(meta, p)).collect();
    PairFeatureTable {
        schema,
        pair_keys: pairs,
        pair_names,
        duration_s: t,
        columns,
        labels,
    }
}

/// Write the table as CSV: `pair_id,second,label,<slots...>`; Missing
/// values are empty cells.
pub fn export_csv(table: &PairFeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write!(w, "pair_id,second,label")?;
    for name in table.schema.names() {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (pair_idx, name) in table.pair_names.iter().enumerate() {
        for s in 0..table.duration_s {
            let row = pair_idx * table.duration_s + s;
            write!(w, "{name},{s},{}", table.labels[row])?;
            for col in &table.columns {
                let v = col[row];
                if v.is_nan() {
                    write!(w, ",")?;
                } else {
                    write!(w, ",{v}")?;
                }
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Read a table back; `participants` (sorted ids) resolves pair names to
/// canonical keys.
pub fn import_csv(path: impl AsRef<Path>, participants: &[String]) -> Result<PairFeatureTable> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::InputMissing(path.display().to_string()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "pair_id" || &headers[1] != "second" || &headers[2] != "label" {
        return Err(Error::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            reason: "expected pair_id,second,label,... header".into(),
        });
    }
    let slots: Vec<SlotDef> = headers
        .iter()
        .skip(3)
        .map(|name| SlotDef {
            name: name.to_string(),
            group: slot_group_from_name(name),
        })
        .collect();
    let n_slots = slots.len();
    let schema = FeatureSchema::from_slots(slots);

    let lookup = |id: &str| -> Result<u32> {
        participants
            .binary_search_by(|p| p.as_str().cmp(id))
            .map(|i| i as u32)
            .map_err(|_| Error::MalformedRow {
                path: path.display().to_string(),
                line: 0,
                reason: format!("unregistered participant id {id:?}"),
            })
    };

    let mut pair_keys: Vec<PairKey> = Vec::new();
    let mut pair_names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<f64>> = (0..n_slots).map(|_| Vec::new()).collect();
    let mut labels: Vec<u8> = Vec::new();
    let mut duration_s = 0usize;

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: String| Error::MalformedRow {
            path: path.display().to_string(),
            line,
            reason,
        };
        let name = record[0].to_string();
        if pair_names.last() != Some(&name) {
            if pair_names.contains(&name) {
                return Err(bad(format!("pair {name} rows are not contiguous")));
            }
            let (a, b) = name
                .split_once(';')
                .ok_or_else(|| bad(format!("bad pair_id {name:?}")))?;
            pair_keys.push(PairKey::new(lookup(a)?, lookup(b)?));
            pair_names.push(name);
        }
        let second: usize = record[1]
            .parse()
            .map_err(|_| bad(format!("bad second {:?}", &record[1])))?;
        duration_s = duration_s.max(second + 1);
        let label: u8 = record[2]
            .parse()
            .map_err(|_| bad(format!("bad label {:?}", &record[2])))?;
        labels.push(label);
        if record.len() != n_slots + 3 {
            return Err(bad(format!(
                "expected {} columns, found {}",
                n_slots + 3,
                record.len()
            )));
        }
        for (slot, field) in record.iter().skip(3).enumerate() {
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field
                    .parse()
                    .map_err(|_| bad(format!("bad value {field:?}")))?
            };
            columns[slot].push(v);
        }
    }

    if pair_keys.is_empty() {
        return Err(Error::InputMissing(format!(
            "{} holds no rows",
            path.display()
        )));
    }
    if labels.len() != pair_keys.len() * duration_s {
        return Err(Error::MalformedRow {
            path: path.display().to_string(),
            line: 0,
            reason: "table is not a full (pair, second) grid".into(),
        });
    }
    Ok(PairFeatureTable {
        schema,
        pair_keys,
        pair_names,
        duration_s,
        columns,
        labels,
    })
}

fn slot_group_from_name(name: &str) -> FeatureGroup {
    if name.starts_with("prox_rssi") {
        FeatureGroup::Interpersonal
    } else if name.starts_with("device_position") {
        FeatureGroup::DevicePosition
    } else if name.starts_with("ceiling_beacon") {
        FeatureGroup::IndoorPositioning
    } else {
        FeatureGroup::Motion
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpersonal_examples() {
        assert_eq!(interpersonal_features(-60.0, -70.0), (-65.0, 10.0));
        assert_eq!(interpersonal_features(-80.0, -80.0), (-80.0, 0.0));
        // A filled reading participates like an observed one.
        assert_eq!(interpersonal_features(-100.0, -60.0), (-80.0, 40.0));
        // Symmetric in its arguments.
        assert_eq!(
            interpersonal_features(-63.0, -71.0),
            interpersonal_features(-71.0, -63.0)
        );
    }

    #[test]
    fn onehot_slots() {
        assert_eq!(
            device_position_onehot::<f64>(Pocket::Left, Pocket::Left),
            [1.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            device_position_onehot::<f64>(Pocket::Left, Pocket::Right),
            [0.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(
            device_position_onehot::<f64>(Pocket::Right, Pocket::Left),
            [0.0, 0.0, 1.0, 0.0]
        );
        let sum: f64 = device_position_onehot::<f64>(Pocket::Right, Pocket::Right)
            .iter()
            .sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn ceiling_diff_is_symmetric() {
        let a = [2.0, 1.0];
        let b = [2.0, 4.5];
        assert_eq!(ceiling_diff(&a, &b), vec![0.0, 3.5]);
        assert_eq!(ceiling_diff(&b, &a), ceiling_diff(&a, &b));
    }

    #[test]
    fn time_since_moving_counts_stationary_seconds() {
        let moving = vec![true, false, false, true, false];
        assert_eq!(time_since_moving(&moving), vec![0.0, 1.0, 2.0, 0.0, 1.0]);
        // Never moved: grows from the session start.
        assert_eq!(time_since_moving(&[false; 3]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn tsm_diff_examples() {
        // i still for 10 s, j still for 7 s.
        assert_eq!(time_since_moving_diff(&[10.0], &[7.0]), vec![3.0]);
        // Both moving now -> Missing.
        assert!(time_since_moving_diff(&[0.0], &[0.0])[0].is_nan());
        // Both stopped at the same second.
        assert_eq!(time_since_moving_diff(&[4.0], &[4.0]), vec![0.0]);
    }

    #[test]
    fn window_stats_examples() {
        let (mn, mx, me, sd) = past_window_stats(&[3.5f64; 6]);
        assert_eq!((mn, mx, me, sd), (3.5, 3.5, 3.5, 0.0));

        let vals: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let (mn, mx, me, sd) = past_window_stats(&vals);
        assert_eq!((mn, mx, me), (1.0, 10.0, 5.5));
        assert!((sd - 2.8722813232690143).abs() < 1e-12);

        let all_missing = [f64::NAN, f64::NAN];
        let (mn, mx, me, sd) = past_window_stats(&all_missing);
        assert!(mn.is_nan() && mx.is_nan() && me.is_nan() && sd.is_nan());
    }

    #[test]
    fn window_stats_skip_missing_and_bound_mean() {
        let vals = [f64::NAN, 2.0, f64::NAN, 8.0];
        let (mn, mx, me, sd) = past_window_stats(&vals);
        assert_eq!((mn, mx, me, sd), (2.0, 8.0, 5.0, 3.0));
        assert!(mn <= me && me <= mx);
    }

    #[test]
    fn schema_counts_match_full_family_layout() {
        // 2 + 4 + 5 + 7 base, 14 time-series -> 74 slots in total.
        let schema = FeatureSchema::build(&all_groups(), 5);
        assert_eq!(schema.len(), 74);
        let interpersonal_only =
            FeatureSchema::build(&[FeatureGroup::Interpersonal].into_iter().collect(), 5);
        assert_eq!(
            interpersonal_only.names().collect::<Vec<_>>(),
            vec![
                "prox_rssi_mean",
                "prox_rssi_diff",
                "prox_rssi_mean_min",
                "prox_rssi_mean_max",
                "prox_rssi_mean_mean",
                "prox_rssi_mean_std",
                "prox_rssi_diff_min",
                "prox_rssi_diff_max",
                "prox_rssi_diff_mean",
                "prox_rssi_diff_std",
            ]
        );
    }

    #[test]
    fn dropping_groups_removes_their_slots() {
        let schema = FeatureSchema::build(&all_groups(), 5);
        let dropped = schema.without_groups(&[FeatureGroup::IndoorPositioning].into_iter().collect());
        assert_eq!(dropped.len(), 74 - 25);
        assert!(dropped.names().all(|n| !n.starts_with("ceiling")));
    }
}
