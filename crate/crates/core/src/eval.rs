//! Link-, node- and group-level evaluation.
//!
//! Link level: precision-recall curves and average precision over the
//! per-(pair, second) scores. Node and group level: greedy Jaccard matching
//! between detected formations and ground-truth groups, swept over the
//! community-detection resolution parameter.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::{build_graph, extract_groups, louvain, ExtractedGroups};
use crate::error::{Error, Result};
use crate::model::LabelGrid;
use crate::num::Real;

/// Precision-recall curve with step-interpolated average precision.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve<R> {
    /// One point per distinct score, descending by threshold.
    pub thresholds: Vec<R>,
    /// `(recall, precision)` aligned with `thresholds`.
    pub points: Vec<(R, R)>,
    pub ap: R,
}

/// Indices sorted by score descending; ties keep row order.
fn descending_order<R: Real>(scores: &[R]) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..scores.len() as u32).collect();
    idx.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Precision-recall curve over binary labels, one threshold per distinct
/// score; `AP = sum_n (R_n - R_{n-1}) * P_n`.
pub fn pr_curve<R: Real>(scores: &[R], labels: &[u8]) -> Result<PrCurve<R>> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let order = descending_order(scores);

    let mut thresholds = Vec::new();
    let mut points = Vec::new();
    let mut ap = R::zero();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = R::zero();
    let mut i = 0usize;
    while i < order.len() {
        let threshold = scores[order[i] as usize];
        // Consume the whole tie group as one threshold.
        while i < order.len() && scores[order[i] as usize] == threshold {
            match labels[order[i] as usize] {
                1 => tp += 1,
                _ => fp += 1,
            }
            i += 1;
        }
        let recall = R::of(tp as f64 / n_pos as f64);
        let precision = R::of(tp as f64 / (tp + fp) as f64);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        thresholds.push(threshold);
        points.push((recall, precision));
    }
    Ok(PrCurve {
        thresholds,
        points,
        ap,
    })
}

pub fn average_precision<R: Real>(scores: &[R], labels: &[u8]) -> Result<R> {
    Ok(pr_curve(scores, labels)?.ap)
}

/// The naive probabilistic classifier: every row scored with the positive
/// prevalence of the labels. Its AP equals the prevalence.
pub fn npc_baseline<R: Real>(labels: &[u8]) -> Vec<R> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let prior = if labels.is_empty() {
        R::zero()
    } else {
        R::of(n_pos as f64 / labels.len() as f64)
    };
    vec![prior; labels.len()]
}

/// Threshold maximizing the F_beta score; candidates are the distinct
/// scores and ties resolve to the larger threshold.
pub fn select_threshold<R: Real>(scores: &[R], labels: &[u8], beta: f64) -> Result<R> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let order = descending_order(scores);
    let beta2 = R::of(beta * beta);
    let mut best_threshold = R::nan();
    let mut best_f = R::neg_infinity();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0usize;
    while i < order.len() {
        let threshold = scores[order[i] as usize];
        while i < order.len() && scores[order[i] as usize] == threshold {
            match labels[order[i] as usize] {
                1 => tp += 1,
                _ => fp += 1,
            }
            i += 1;
        }
        let p = R::of(tp as f64 / (tp + fp) as f64);
        let r = R::of(tp as f64 / n_pos as f64);
        let f = if p + r == R::zero() {
            R::zero()
        } else {
            (R::one() + beta2) * p * r / (beta2 * p + r)
        };
        // Strict improvement only: descending scan keeps the largest
        // threshold on ties.
        if f > best_f {
            best_f = f;
            best_threshold = threshold;
        }
    }
    Ok(best_threshold)
}

/// Confusion counts and derived rates at a probability cut-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    /// False when nothing was predicted positive (precision reported as 0).
    pub precision_defined: bool,
}

pub fn confusion<R: Real>(scores: &[R], labels: &[u8], threshold: R) -> Confusion {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (s, &y) in scores.iter().zip(labels.iter()) {
        let predicted = *s >= threshold;
        match (predicted, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision_defined = tp + fp > 0;
    let precision = if precision_defined {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let total = tp + fp + fn_ + tn;
    let accuracy = if total > 0 {
        (tp + tn) as f64 / total as f64
    } else {
        0.0
    };
    Confusion {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        accuracy,
        precision_defined,
    }
}

/// Matching outcome for one second.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMatchResult {
    /// `(detected index, truth index, jaccard)` pairs, each side used once.
    pub matches: Vec<(usize, usize, f64)>,
    pub group_correct: usize,
    pub truth_groups: usize,
    pub node_correct: usize,
    pub n_nodes: usize,
}

fn jaccard(a: &[u32], b: &[u32]) -> (f64, usize) {
    let sa: BTreeSet<u32> = a.iter().copied().collect();
    let inter = b.iter().filter(|v| sa.contains(v)).count();
    let union = sa.len() + b.len() - inter;
    if union == 0 {
        (0.0, 0)
    } else {
        (inter as f64 / union as f64, inter)
    }
}

/// Greedy Jaccard matching between detected and truth groups at one second.
///
/// A group counts as correct when its matched sets are identical; a node in
/// a truth group counts when it lies in the intersection of that group and
/// its match; a truth singleton counts when it was detected as a singleton.
pub fn match_groups(
    detected: &ExtractedGroups,
    truth: &[Vec<u32>],
    n_participants: usize,
) -> GroupMatchResult {
    // All overlapping candidate pairs, best first: Jaccard desc, then
    // intersection size desc, then lexicographic member lists.
    let mut candidates: Vec<(usize, usize, f64, usize)> = Vec::new();
    for (d, dg) in detected.groups.iter().enumerate() {
        for (t, tg) in truth.iter().enumerate() {
            let (j, inter) = jaccard(dg, tg);
            if j > 0.0 {
                candidates.push((d, t, j, inter));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(b.3.cmp(&a.3))
            .then_with(|| {
                (&detected.groups[a.0], &truth[a.1]).cmp(&(&detected.groups[b.0], &truth[b.1]))
            })
    });

    let mut detected_used = vec![false; detected.groups.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut matches = Vec::new();
    for (d, t, j, _) in candidates {
        if !detected_used[d] && !truth_used[t] {
            detected_used[d] = true;
            truth_used[t] = true;
            matches.push((d, t, j));
        }
    }

    let mut group_correct = 0usize;
    let mut node_correct = 0usize;
    let mut in_truth_group = vec![false; n_participants];
    for tg in truth {
        for &v in tg {
            in_truth_group[v as usize] = true;
        }
    }
    for &(d, t, _) in &matches {
        let dg = &detected.groups[d];
        let tg = &truth[t];
        if dg == tg {
            group_correct += 1;
        }
        let ds: BTreeSet<u32> = dg.iter().copied().collect();
        for &v in tg {
            if ds.contains(&v) {
                node_correct += 1;
            }
        }
    }
    // Truth singletons: correct when detected as non-interacting.
    let detected_single: BTreeSet<u32> = detected.non_interacting.iter().copied().collect();
    for v in 0..n_participants as u32 {
        if !in_truth_group[v as usize] && detected_single.contains(&v) {
            node_correct += 1;
        }
    }

    GroupMatchResult {
        matches,
        group_correct,
        truth_groups: truth.len(),
        node_correct,
        n_nodes: n_participants,
    }
}

/// Node- and group-level accuracy at one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionPoint {
    pub gamma: f64,
    pub node_accuracy: f64,
    pub group_accuracy: f64,
}

/// The standard sweep grid 0.1, 0.2, .., 1.0.
pub fn default_gamma_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Run graph building, community detection and group matching for every
/// second at every resolution.
///
/// `probabilities[second]` holds one score per canonical pair.
pub fn sweep_resolution(
    probabilities: &[Vec<f64>],
    truth: &LabelGrid,
    gammas: &[f64],
    edge_floor: f64,
    min_group_size: usize,
    seed: u64,
) -> Vec<ResolutionPoint> {
    let n = truth.n_participants();
    gammas
        .iter()
        .map(|&gamma| {
            let per_second: Vec<(usize, usize, usize, usize)> = probabilities
                .par_iter()
                .enumerate()
                .map(|(s, probs)| {
                    let graph = build_graph(n, probs, edge_floor, s);
                    let partition = louvain(&graph, gamma, seed.wrapping_add(s as u64));
                    let detected = extract_groups(&partition, min_group_size);
                    let result = match_groups(&detected, &truth.truth_groups_at(s), n);
                    (
                        result.node_correct,
                        result.n_nodes,
                        result.group_correct,
                        result.truth_groups,
                    )
                })
                .collect();
            let (mut nc, mut nn, mut gc, mut gt) = (0usize, 0usize, 0usize, 0usize);
            for (a, b, c, d) in per_second {
                nc += a;
                nn += b;
                gc += c;
                gt += d;
            }
            ResolutionPoint {
                gamma,
                node_accuracy: if nn > 0 { nc as f64 / nn as f64 } else { 0.0 },
                group_accuracy: if gt > 0 { gc as f64 / gt as f64 } else { 0.0 },
            }
        })
        .collect()
}

/// One leave-one-family-out ablation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    /// `"none"` for the full feature set, otherwise the dropped family.
    pub dropped: String,
    pub ap: f64,
}

/// Leave-one-sensor-family-out ablation: for the full set and for each
/// family present in the schema, cross-validate on the validation pairs and
/// report the average precision. With `retune` the hyper-parameters are
/// re-searched on the tuning pairs per configuration; otherwise `base_cfg`
/// is reused.
#[allow(clippy::too_many_arguments)]
pub fn ablation(
    table: &crate::features::PairFeatureTable,
    validation_pairs: &[usize],
    tuning_pairs: &[usize],
    base_cfg: &crate::gbdt::GbdtConfig,
    cv_folds: usize,
    seed: u64,
    retune: Option<(&crate::gbdt::ParamGrid, usize)>,
) -> Result<Vec<AblationPoint>> {
    use crate::features::FeatureGroup;
    let families: Vec<FeatureGroup> = {
        let mut set = BTreeSet::new();
        for slot in &table.schema.slots {
            set.insert(slot.group);
        }
        set.into_iter().collect()
    };

    let mut configurations: Vec<(String, BTreeSet<FeatureGroup>)> =
        vec![("none".to_string(), BTreeSet::new())];
    if families.len() > 1 {
        for f in &families {
            configurations.push((f.as_str().to_string(), [*f].into_iter().collect()));
        }
    }

    let mut out = Vec::with_capacity(configurations.len());
    for (name, drop) in configurations {
        let reduced = if drop.is_empty() {
            table.clone()
        } else {
            table.without_groups(&drop)
        };
        let cfg = match retune {
            Some((grid, tune_folds)) => {
                crate::gbdt::grid_search(&reduced, tuning_pairs, base_cfg, grid, tune_folds, seed)?
                    .best
            }
            None => base_cfg.clone(),
        };
        let cv = crate::gbdt::cross_validate(&reduced, validation_pairs, &cfg, cv_folds, seed)?;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for &p in validation_pairs {
            for s in 0..reduced.duration_s {
                let r = p * reduced.duration_s + s;
                scores.push(cv.proba[r]);
                labels.push(reduced.labels[r]);
            }
        }
        out.push(AblationPoint {
            dropped: name,
            ap: average_precision(&scores, &labels)?,
        });
    }
    Ok(out)
}

/// Best sweep point by node accuracy (then group accuracy, then smaller
/// gamma).
pub fn best_resolution(points: &[ResolutionPoint]) -> Option<&ResolutionPoint> {
    points.iter().reduce(|best, p| {
        if p.node_accuracy > best.node_accuracy
            || (p.node_accuracy == best.node_accuracy && p.group_accuracy > best.group_accuracy)
        {
            p
        } else {
            best
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pr_curve_hand_fixture() {
        let curve = pr_curve(&[0.9f64, 0.8, 0.7], &[1, 0, 1]).unwrap();
        assert_eq!(curve.thresholds, vec![0.9, 0.8, 0.7]);
        assert_eq!(curve.points[0], (0.5, 1.0));
        assert_eq!(curve.points[1], (0.5, 0.5));
        assert!((curve.points[2].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((curve.ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking_has_ap_one() {
        let curve = pr_curve(&[0.9f64, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert!((curve.ap - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_scores_give_prevalence() {
        let labels = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0];
        let scores = [0.5f64; 10];
        let curve = pr_curve(&scores, &labels).unwrap();
        assert_eq!(curve.thresholds.len(), 1);
        assert!((curve.ap - 0.2).abs() < 1e-15);
        // Which is exactly what the NPC baseline scores.
        let npc: Vec<f64> = npc_baseline(&labels);
        assert!((average_precision(&npc, &labels).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(matches!(
            pr_curve(&[0.5f64, 0.4], &[0, 0]),
            Err(Error::NoPositives)
        ));
    }

    #[test]
    fn ap_is_invariant_under_monotone_transforms() {
        let mut state = 9u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let scores: Vec<f64> = (0..60).map(|_| next()).collect();
        let labels: Vec<u8> = (0..60).map(|_| (next() < 0.3) as u8).collect();
        if labels.iter().all(|&y| y == 0) {
            return;
        }
        let base = average_precision(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|&s| 1.0 / (1.0 + (-4.0 * s).exp())).collect();
        let scaled: Vec<f64> = scores.iter().map(|&s| 0.2 * s + 3.0).collect();
        assert!((average_precision(&squashed, &labels).unwrap() - base).abs() < 1e-12);
        assert!((average_precision(&scaled, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn threshold_prefers_the_larger_candidate_on_ties() {
        // Perfectly separated: every threshold at or below 0.8 yields
        // P = R = 1 on the positives; the largest candidate wins.
        let scores = [0.9f64, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        let p = select_threshold(&scores, &labels, 1.0).unwrap();
        assert_eq!(p, 0.8);
    }

    #[test]
    fn beta_below_one_weighs_precision_higher() {
        // One noisy negative sits just under the positives; beta = 0.5
        // prefers cutting it away even at some recall cost.
        let scores = [0.95f64, 0.9, 0.85, 0.8, 0.75, 0.5, 0.45, 0.4, 0.3, 0.2];
        let labels = [1, 1, 0, 1, 1, 0, 0, 0, 1, 0];
        let f1 = select_threshold(&scores, &labels, 1.0).unwrap();
        let f_half = select_threshold(&scores, &labels, 0.5).unwrap();
        assert!(f_half >= f1, "f0.5 {f_half} < f1 {f1}");
    }

    #[test]
    fn confusion_published_operating_point() {
        // 20870 TP, 5940 FP, 3269 FN.
        let mut scores: Vec<f64> = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..20_870 {
            scores.push(1.0);
            labels.push(1);
        }
        for _ in 0..5_940 {
            scores.push(1.0);
            labels.push(0);
        }
        for _ in 0..3_269 {
            scores.push(0.0);
            labels.push(1);
        }
        let c = confusion(&scores, &labels, 0.61);
        assert_eq!((c.tp, c.fp, c.fn_), (20_870, 5_940, 3_269));
        assert!((c.precision - 0.7784).abs() < 5e-5, "{}", c.precision);
        assert!((c.recall - 0.8646).abs() < 5e-5, "{}", c.recall);
    }

    #[test]
    fn confusion_degenerate_cases() {
        let c = confusion(&[0.1f64, 0.2], &[1, 0], 0.9);
        assert_eq!((c.tp, c.fp), (0, 0));
        assert!(!c.precision_defined);
        assert_eq!(c.precision, 0.0);

        let perfect = confusion(&[0.9f64, 0.1], &[1, 0], 0.5);
        assert_eq!((perfect.precision, perfect.recall), (1.0, 1.0));
        assert_eq!(
            perfect.tp + perfect.fp + perfect.fn_ + perfect.tn,
            2,
            "counts sum to rows"
        );
    }

    fn ex(groups: Vec<Vec<u32>>, single: Vec<u32>) -> ExtractedGroups {
        ExtractedGroups {
            groups,
            non_interacting: single,
        }
    }

    #[test]
    fn match_groups_exact_match() {
        let detected = ex(vec![vec![0, 1, 2]], vec![3]);
        let truth = vec![vec![0, 1, 2]];
        let r = match_groups(&detected, &truth, 4);
        assert_eq!(r.group_correct, 1);
        // 3 members + participant 3 detected as singleton.
        assert_eq!(r.node_correct, 4);
    }

    #[test]
    fn match_groups_partial_detection() {
        let detected = ex(vec![vec![0, 1]], vec![2, 3]);
        let truth = vec![vec![0, 1, 2]];
        let r = match_groups(&detected, &truth, 4);
        assert_eq!(r.group_correct, 0);
        // 0 and 1 are in the intersection; 2 is not; 3 is a correct
        // singleton.
        assert_eq!(r.node_correct, 3);
    }

    #[test]
    fn match_groups_split_detection() {
        let detected = ex(vec![vec![0, 1], vec![2, 3]], vec![]);
        let truth = vec![vec![0, 1, 2, 3]];
        let r = match_groups(&detected, &truth, 4);
        assert_eq!(r.matches.len(), 1);
        let (_, _, j) = r.matches[0];
        assert!((j - 0.5).abs() < 1e-15);
        assert_eq!(r.group_correct, 0);
        assert_eq!(r.node_correct, 2);
    }

    #[test]
    fn perfect_detection_scores_one_on_both_levels() {
        let detected = ex(vec![vec![0, 1], vec![2, 3, 4]], vec![5]);
        let truth = vec![vec![0, 1], vec![2, 3, 4]];
        let r = match_groups(&detected, &truth, 6);
        assert_eq!(r.group_correct, r.truth_groups);
        assert_eq!(r.node_correct, r.n_nodes);
    }
}
