//! Domain types and the per-second pair label grid.
//!
//! Participants are stored sorted by id, so participant indices follow the
//! lexicographic order of the ids and the canonical orientation of a pair
//! `(a, b)` with `a < b` puts the lexicographically smaller id first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ParticipantId = String;

/// Trouser pocket holding a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pocket {
    Left,
    Right,
}

impl Pocket {
    pub fn parse(s: &str) -> Option<Pocket> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Some(Pocket::Left),
            "right" | "r" => Some(Pocket::Right),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Pocket::Left => "left",
            Pocket::Right => "right",
        }
    }
}

/// Static per-participant facts from the metadata file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantMeta {
    pub participant_id: ParticipantId,
    pub device_pocket: Pocket,
    pub beacon_pocket: Pocket,
    /// iBeacon Minor value broadcast by this participant's wearable beacon.
    pub beacon_minor: u16,
}

impl ParticipantMeta {
    /// The phone never shares a pocket with the beacon.
    pub fn validate(&self) -> Result<()> {
        if self.device_pocket == self.beacon_pocket {
            return Err(Error::ConfigInvalid(format!(
                "participant {}: device and beacon share the {} pocket",
                self.participant_id,
                self.device_pocket.as_str()
            )));
        }
        Ok(())
    }
}

/// What emitted a sighting: another participant's wearable beacon or one of
/// the fixed ceiling beacons (indexed from 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeaconSource {
    Coin { minor: u16 },
    Ceiling { index: usize },
}

/// One receiver-side RSSI observation.
///
/// `rssi` is `None` for an Unknown reading (stored as -1 in the logs).
/// Known values are whole dBm in `[-120, 0]`; they are kept as `f64`
/// because synthetic streams are exact before wire quantization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconSighting {
    /// Seconds since session start.
    pub t: f64,
    /// Index into `SessionDataset::participants`.
    pub receiver: u32,
    pub source: BeaconSource,
    pub rssi: Option<f64>,
    /// Calibrated RSSI at 1 m; present for ceiling beacons.
    pub measured_power: Option<f64>,
}

/// Raw per-participant motion magnitudes at the device's native rate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMotion {
    /// Sample timestamps, seconds since session start, strictly increasing.
    pub t: Vec<f64>,
    pub lin_acc_mag: Vec<f64>,
    pub gravity_mag: Vec<f64>,
    pub rotation_rate_mag: Vec<f64>,
}

/// Uniformly resampled motion magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSeries {
    pub sample_rate: f64,
    /// Session-start offset of sample 0.
    pub t0: f64,
    pub lin_acc_mag: Vec<f64>,
    pub gravity_mag: Vec<f64>,
    pub rotation_rate_mag: Vec<f64>,
}

/// Unordered participant pair in canonical orientation (`a < b`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub a: u32,
    pub b: u32,
}

impl PairKey {
    pub fn new(x: u32, y: u32) -> PairKey {
        debug_assert_ne!(x, y, "a pair needs two distinct participants");
        if x < y {
            PairKey { a: x, b: y }
        } else {
            PairKey { a: y, b: x }
        }
    }
}

/// All `C(n, 2)` pairs in canonical order: (0,1), (0,2), .., (1,2), ..
pub fn all_pairs(n: usize) -> Vec<PairKey> {
    let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for a in 0..n as u32 {
        for b in (a + 1)..n as u32 {
            out.push(PairKey { a, b });
        }
    }
    out
}

/// Index of a canonical pair within the `all_pairs(n)` enumeration.
pub fn pair_index(n: usize, pair: PairKey) -> usize {
    let n = n as u32;
    let (a, b) = (pair.a, pair.b);
    (a * (2 * n - a - 1) / 2 + (b - a - 1)) as usize
}

/// A ground-truth group: a set of participants interacting over `[start_s, end_s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupInterval {
    pub group_id: u32,
    /// Participant indices, at least two.
    pub members: Vec<u32>,
    pub start_s: u64,
    /// Exclusive.
    pub end_s: u64,
}

/// Binary interaction labels for every (pair, second), plus the group id of
/// each participant at each second when ground truth is available.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    n_participants: usize,
    duration_s: usize,
    /// Pair-major: `pair_index * duration_s + second`.
    labels: Vec<bool>,
    /// Participant-major: `participant * duration_s + second`.
    group_of: Vec<Option<u32>>,
}

impl LabelGrid {
    pub fn empty(n_participants: usize, duration_s: usize) -> LabelGrid {
        let n_pairs = n_participants * n_participants.saturating_sub(1) / 2;
        LabelGrid {
            n_participants,
            duration_s,
            labels: vec![false; n_pairs * duration_s],
            group_of: vec![None; n_participants * duration_s],
        }
    }

    pub fn n_participants(&self) -> usize {
        self.n_participants
    }

    pub fn duration_s(&self) -> usize {
        self.duration_s
    }

    pub fn n_pairs(&self) -> usize {
        self.n_participants * self.n_participants.saturating_sub(1) / 2
    }

    pub fn pairs(&self) -> Vec<PairKey> {
        all_pairs(self.n_participants)
    }

    pub fn label(&self, pair: PairKey, second: usize) -> bool {
        self.labels[pair_index(self.n_participants, pair) * self.duration_s + second]
    }

    pub fn group_id(&self, participant: u32, second: usize) -> Option<u32> {
        self.group_of[participant as usize * self.duration_s + second]
    }

    /// Ground-truth groups active at `second`, each as a sorted member list.
    pub fn truth_groups_at(&self, second: usize) -> Vec<Vec<u32>> {
        let mut by_id: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
        for p in 0..self.n_participants as u32 {
            if let Some(g) = self.group_id(p, second) {
                by_id.entry(g).or_default().push(p);
            }
        }
        by_id.into_values().collect()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negative_count(&self) -> usize {
        self.labels.len() - self.positive_count()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.positive_count() as f64 / self.labels.len() as f64
        }
    }
}

/// Default minimum group duration; shorter configurations are not counted.
pub const MIN_GROUP_DURATION_S: u64 = 5;

/// Build the per-second label grid from ground-truth group intervals.
///
/// A pair is labelled 1 at second `s` exactly when both members share the
/// same active group. Intervals shorter than `min_duration_s` are dropped.
pub fn build_label_grid(
    n_participants: usize,
    duration_s: usize,
    groups: &[GroupInterval],
    min_duration_s: u64,
) -> Result<LabelGrid> {
    let mut grid = LabelGrid::empty(n_participants, duration_s);
    for g in groups {
        if g.end_s.saturating_sub(g.start_s) < min_duration_s {
            continue;
        }
        let end = (g.end_s as usize).min(duration_s);
        for s in g.start_s as usize..end {
            for &m in &g.members {
                let slot = &mut grid.group_of[m as usize * duration_s + s];
                if let Some(existing) = *slot {
                    if existing != g.group_id {
                        return Err(Error::OverlappingMembership {
                            participant: format!("#{m}"),
                            second: s as u64,
                        });
                    }
                }
                *slot = Some(g.group_id);
            }
            for i in 0..g.members.len() {
                for j in i + 1..g.members.len() {
                    let pair = PairKey::new(g.members[i], g.members[j]);
                    grid.labels[pair_index(n_participants, pair) * duration_s + s] = true;
                }
            }
        }
    }
    Ok(grid)
}

/// Instance weight for positive samples: `count(label=0) / count(label=1)`.
pub fn positive_weight(grid: &LabelGrid) -> Result<f64> {
    let pos = grid.positive_count();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    Ok(grid.negative_count() as f64 / pos as f64)
}

/// A fully ingested session: participants, beacon sightings, raw motion and
/// (optionally) ground-truth labels. Immutable once built.
#[derive(Debug, Clone)]
pub struct SessionDataset {
    /// Sorted by participant id.
    pub participants: Vec<ParticipantMeta>,
    pub sightings: Vec<BeaconSighting>,
    /// Indexed like `participants`.
    pub motion: Vec<RawMotion>,
    /// Ground-truth intervals the label grid was built from, kept for
    /// lossless re-serialization.
    pub groups: Vec<GroupInterval>,
    pub labels: Option<LabelGrid>,
    pub duration_s: usize,
}

impl SessionDataset {
    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn participant_index(&self, id: &str) -> Option<u32> {
        self.participants
            .binary_search_by(|m| m.participant_id.as_str().cmp(id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn index_of_minor(&self, minor: u16) -> Option<u32> {
        self.participants
            .iter()
            .position(|m| m.beacon_minor == minor)
            .map(|i| i as u32)
    }

    /// Referential integrity: every sighting receiver and motion key is a
    /// registered participant, and pockets obey the metadata invariant.
    pub fn validate(&self) -> Result<()> {
        for m in &self.participants {
            m.validate()?;
        }
        if self.motion.len() != self.participants.len() {
            return Err(Error::ConfigInvalid(
                "motion map does not cover every participant".into(),
            ));
        }
        for s in &self.sightings {
            if s.receiver as usize >= self.participants.len() {
                return Err(Error::ConfigInvalid(format!(
                    "sighting references unregistered receiver index {}",
                    s.receiver
                )));
            }
            if let Some(r) = s.rssi {
                if !(-120.0..=0.0).contains(&r) {
                    return Err(Error::ConfigInvalid(format!(
                        "rssi {r} outside [-120, 0]"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_abc_d() -> LabelGrid {
        // Group {0,1,2} active on [0, 10); participant 3 alone.
        build_label_grid(
            4,
            20,
            &[GroupInterval {
                group_id: 1,
                members: vec![0, 1, 2],
                start_s: 0,
                end_s: 10,
            }],
            MIN_GROUP_DURATION_S,
        )
        .unwrap()
    }

    #[test]
    fn pair_enumeration_is_canonical() {
        let pairs = all_pairs(4);
        assert_eq!(pairs.len(), 6);
        for (i, p) in pairs.iter().enumerate() {
            assert!(p.a < p.b);
            assert_eq!(pair_index(4, *p), i);
        }
        assert_eq!(PairKey::new(3, 1), PairKey { a: 1, b: 3 });
    }

    #[test]
    fn three_participants_make_three_pairs() {
        let grid = LabelGrid::empty(3, 60);
        assert_eq!(grid.n_pairs(), 3);
    }

    #[test]
    fn group_of_three_labels_all_combinations() {
        let grid = grid_abc_d();
        let s = 5;
        assert!(grid.label(PairKey::new(0, 1), s));
        assert!(grid.label(PairKey::new(0, 2), s));
        assert!(grid.label(PairKey::new(1, 2), s));
        for other in 0..3 {
            assert!(!grid.label(PairKey::new(other, 3), s));
        }
        // Outside the interval everything is 0.
        assert_eq!(
            all_pairs(4).iter().filter(|p| grid.label(**p, 15)).count(),
            0
        );
    }

    #[test]
    fn no_groups_means_all_zero() {
        let grid = build_label_grid(4, 10, &[], MIN_GROUP_DURATION_S).unwrap();
        assert_eq!(grid.positive_count(), 0);
    }

    #[test]
    fn overlapping_membership_is_rejected() {
        let groups = [
            GroupInterval {
                group_id: 1,
                members: vec![0, 1],
                start_s: 0,
                end_s: 10,
            },
            GroupInterval {
                group_id: 2,
                members: vec![0, 2],
                start_s: 5,
                end_s: 15,
            },
        ];
        let err = build_label_grid(3, 20, &groups, MIN_GROUP_DURATION_S).unwrap_err();
        assert!(matches!(err, Error::OverlappingMembership { second: 5, .. }));
    }

    #[test]
    fn short_intervals_are_dropped() {
        let groups = [GroupInterval {
            group_id: 1,
            members: vec![0, 1],
            start_s: 0,
            end_s: 4,
        }];
        let grid = build_label_grid(2, 10, &groups, MIN_GROUP_DURATION_S).unwrap();
        assert_eq!(grid.positive_count(), 0);
    }

    #[test]
    fn per_second_positive_sum_matches_group_sizes() {
        // Two groups of sizes 3 and 2 -> C(3,2)+C(2,2) = 4 positives per second.
        let groups = [
            GroupInterval {
                group_id: 1,
                members: vec![0, 1, 2],
                start_s: 0,
                end_s: 10,
            },
            GroupInterval {
                group_id: 2,
                members: vec![3, 4],
                start_s: 0,
                end_s: 10,
            },
        ];
        let grid = build_label_grid(6, 10, &groups, MIN_GROUP_DURATION_S).unwrap();
        for s in 0..10 {
            let count = all_pairs(6).iter().filter(|p| grid.label(**p, s)).count();
            assert_eq!(count, 4);
        }
    }

    #[test]
    fn positive_weight_matches_published_counts() {
        // 607,563 negatives over 38,332 positives.
        let w: f64 = 607_563.0 / 38_332.0;
        assert!((w - 15.850_020_87).abs() < 1e-6);

        // Balanced grid -> 1.0 through the API.
        let grid = build_label_grid(
            2,
            10,
            &[GroupInterval {
                group_id: 1,
                members: vec![0, 1],
                start_s: 0,
                end_s: 5,
            }],
            MIN_GROUP_DURATION_S,
        )
        .unwrap();
        assert_eq!(positive_weight(&grid).unwrap(), 1.0);
    }

    #[test]
    fn zero_positives_is_an_error() {
        let grid = LabelGrid::empty(3, 10);
        assert!(matches!(positive_weight(&grid), Err(Error::NoPositives)));
    }

    #[test]
    fn truth_groups_at_second() {
        let grid = grid_abc_d();
        assert_eq!(grid.truth_groups_at(3), vec![vec![0, 1, 2]]);
        assert!(grid.truth_groups_at(12).is_empty());
    }

    #[test]
    fn pocket_invariant() {
        let bad = ParticipantMeta {
            participant_id: "p1".into(),
            device_pocket: Pocket::Left,
            beacon_pocket: Pocket::Left,
            beacon_minor: 1,
        };
        assert!(bad.validate().is_err());
    }
}
