//! Tree construction: level-wise exact greedy boosting.
//!
//! Feature columns are pre-sorted once per fit; every tree level is built
//! with two passes over each candidate feature's sorted order, so the cost
//! per level is O(features x rows) regardless of how the rows split across
//! nodes. Rows missing a feature follow the direction that maximizes the
//! split gain.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::Real;

use super::{
    clamp_probability, logistic_grad_hess, logit, sigmoid, split_gain, GbdtConfig, GbdtModel,
    Node, Tree, MODEL_FORMAT_VERSION,
};

const NO_NODE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct SplitCand<R> {
    gain: R,
    feature: u32,
    threshold: R,
    default_left: bool,
    left_g: R,
    left_h: R,
    right_g: R,
    right_h: R,
}

struct LevelNode<R> {
    arena: u32,
    g: R,
    h: R,
}

/// Value of `tree` for a row stored column-major.
pub(super) fn tree_value_cols<R: Real>(tree: &Tree<R>, columns: &[Vec<R>], row: usize) -> R {
    let mut at = 0u32;
    loop {
        match &tree.nodes[at as usize] {
            Node::Leaf { weight } => return *weight,
            Node::Split {
                feature,
                threshold,
                default_left,
                left,
                right,
            } => {
                let v = columns[*feature as usize][row];
                let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                at = if go_left { *left } else { *right };
            }
        }
    }
}

/// Model logit for a column-major row (schema must match the columns).
pub fn predict_logit_cols<R: Real>(model: &GbdtModel<R>, columns: &[Vec<R>], row: usize) -> R {
    let mut acc = R::of(logit(model.config.base_score));
    for tree in &model.trees {
        acc += tree_value_cols(tree, columns, row);
    }
    acc
}

/// Train an ensemble on the given subset of rows.
///
/// `columns` is column-major with NaN for missing; `rows` indexes into the
/// columns (training happens only on these rows). Two calls with the same
/// inputs and seed produce identical models.
pub fn fit<R: Real>(
    columns: &[Vec<R>],
    feature_names: &[String],
    labels: &[u8],
    rows: &[u32],
    cfg: &GbdtConfig,
) -> Result<GbdtModel<R>> {
    cfg.validate()?;
    if columns.is_empty() {
        return Err(Error::EmptySchema);
    }
    assert_eq!(columns.len(), feature_names.len());
    let n_total = labels.len();
    for c in columns {
        assert_eq!(c.len(), n_total);
    }
    let has_pos = rows.iter().any(|&r| labels[r as usize] == 1);
    let has_neg = rows.iter().any(|&r| labels[r as usize] == 0);
    if !has_pos || !has_neg {
        return Err(Error::SingleClass);
    }

    let n_features = columns.len();
    let lambda = R::of(cfg.lambda);
    let min_child = R::of(cfg.min_child_weight);
    let lr = R::of(cfg.learning_rate);
    let w_pos = R::of(cfg.positive_weight);

    // Sorted present-row order per feature, built on demand.
    let mut sorted: Vec<Option<Vec<u32>>> = vec![None; n_features];
    let ensure_sorted = |sorted: &mut Vec<Option<Vec<u32>>>, f: usize| {
        if sorted[f].is_none() {
            let col = &columns[f];
            let mut idx: Vec<u32> = rows
                .iter()
                .copied()
                .filter(|&r| !col[r as usize].is_nan())
                .collect();
            idx.sort_unstable_by(|&a, &b| {
                col[a as usize]
                    .partial_cmp(&col[b as usize])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            sorted[f] = Some(idx);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut logits = vec![R::of(logit(cfg.base_score)); n_total];
    let mut grad = vec![R::zero(); n_total];
    let mut hess = vec![R::zero(); n_total];
    let mut row_node = vec![NO_NODE; n_total];
    let mut scratch_rows: Vec<u32> = Vec::with_capacity(rows.len());
    let mut feature_pool: Vec<u32> = (0..n_features as u32).collect();
    let mut trees: Vec<Tree<R>> = Vec::with_capacity(cfg.n_trees);

    for _ in 0..cfg.n_trees {
        // Row subsample, without replacement.
        scratch_rows.clear();
        scratch_rows.extend_from_slice(rows);
        let n_sub = if cfg.subsample < 1.0 {
            ((cfg.subsample * rows.len() as f64).round() as usize).clamp(1, rows.len())
        } else {
            rows.len()
        };
        if n_sub < rows.len() {
            for i in 0..n_sub {
                let j = i + rng.random_range(0..scratch_rows.len() - i);
                scratch_rows.swap(i, j);
            }
            scratch_rows.truncate(n_sub);
        }

        // Feature sample.
        let n_feat = if cfg.colsample_bytree < 1.0 {
            ((cfg.colsample_bytree * n_features as f64).round() as usize).clamp(1, n_features)
        } else {
            n_features
        };
        for i in 0..n_feat {
            let j = i + rng.random_range(0..n_features - i);
            feature_pool.swap(i, j);
        }
        let mut tree_features: Vec<u32> = feature_pool[..n_feat].to_vec();
        tree_features.sort_unstable();
        for &f in &tree_features {
            ensure_sorted(&mut sorted, f as usize);
        }

        // Gradients at the current prediction.
        let mut root_g = R::zero();
        let mut root_h = R::zero();
        for &r in &scratch_rows {
            let r = r as usize;
            let y = R::of(labels[r] as f64);
            let w = if labels[r] == 1 { w_pos } else { R::one() };
            let p = clamp_probability(sigmoid(logits[r]));
            let (g, h) = logistic_grad_hess(y, p, w);
            grad[r] = g;
            hess[r] = h;
            root_g += g;
            root_h += h;
        }
        for v in row_node.iter_mut() {
            *v = NO_NODE;
        }
        for &r in &scratch_rows {
            row_node[r as usize] = 0;
        }

        let mut arena: Vec<Node<R>> = vec![Node::Leaf { weight: R::zero() }];
        let mut level: Vec<LevelNode<R>> = vec![LevelNode {
            arena: 0,
            g: root_g,
            h: root_h,
        }];

        for _depth in 0..cfg.max_depth {
            if level.is_empty() {
                break;
            }
            let n_nodes = level.len();
            let mut best: Vec<Option<SplitCand<R>>> = vec![None; n_nodes];
            let mut present_g = vec![R::zero(); n_nodes];
            let mut present_h = vec![R::zero(); n_nodes];
            let mut cum_g = vec![R::zero(); n_nodes];
            let mut cum_h = vec![R::zero(); n_nodes];
            let mut cum_cnt = vec![0u32; n_nodes];
            let mut prev_val = vec![R::nan(); n_nodes];

            for &f in &tree_features {
                let order = sorted[f as usize].as_ref().unwrap();
                let col = &columns[f as usize];
                for v in present_g.iter_mut() {
                    *v = R::zero();
                }
                for v in present_h.iter_mut() {
                    *v = R::zero();
                }
                // Pass 1: per-node totals of present-value gradients.
                for &r in order {
                    let slot = row_node[r as usize];
                    if slot != NO_NODE {
                        present_g[slot as usize] += grad[r as usize];
                        present_h[slot as usize] += hess[r as usize];
                    }
                }
                for i in 0..n_nodes {
                    cum_g[i] = R::zero();
                    cum_h[i] = R::zero();
                    cum_cnt[i] = 0;
                    prev_val[i] = R::nan();
                }
                // Pass 2: enumerate boundaries between distinct values.
                for &r in order {
                    let slot = row_node[r as usize] as usize;
                    if slot == NO_NODE as usize {
                        continue;
                    }
                    let v = col[r as usize];
                    if cum_cnt[slot] > 0 && v > prev_val[slot] {
                        let node = &level[slot];
                        let threshold = (prev_val[slot] + v) / R::of(2.0);
                        let miss_g = node.g - present_g[slot];
                        let miss_h = node.h - present_h[slot];
                        let pl_g = cum_g[slot];
                        let pl_h = cum_h[slot];
                        let pr_g = present_g[slot] - pl_g;
                        let pr_h = present_h[slot] - pl_h;
                        // Missing rows go to whichever side gains more.
                        let mut cand: Option<(R, bool, R, R, R, R)> = None;
                        for default_left in [true, false] {
                            let (lg, lh, rg, rh) = if default_left {
                                (pl_g + miss_g, pl_h + miss_h, pr_g, pr_h)
                            } else {
                                (pl_g, pl_h, pr_g + miss_g, pr_h + miss_h)
                            };
                            if lh < min_child || rh < min_child {
                                continue;
                            }
                            let gain = split_gain(lg, lh, rg, rh, lambda);
                            let better = match cand {
                                None => true,
                                Some((g0, ..)) => gain > g0,
                            };
                            if better {
                                cand = Some((gain, default_left, lg, lh, rg, rh));
                            }
                        }
                        if let Some((gain, default_left, lg, lh, rg, rh)) = cand {
                            let better = match &best[slot] {
                                None => gain > R::zero(),
                                Some(b) => gain > b.gain,
                            };
                            if better {
                                best[slot] = Some(SplitCand {
                                    gain,
                                    feature: f,
                                    threshold,
                                    default_left,
                                    left_g: lg,
                                    left_h: lh,
                                    right_g: rg,
                                    right_h: rh,
                                });
                            }
                        }
                    }
                    cum_g[slot] += grad[r as usize];
                    cum_h[slot] += hess[r as usize];
                    cum_cnt[slot] += 1;
                    prev_val[slot] = v;
                }
            }

            // Commit splits; unsplit nodes become leaves.
            let mut next_level: Vec<LevelNode<R>> = Vec::new();
            // Per current slot: split geometry for the reassignment pass.
            let mut routing: Vec<Option<(u32, R, bool, u32, u32)>> = vec![None; n_nodes];
            for (slot, node) in level.iter().enumerate() {
                match &best[slot] {
                    Some(b) => {
                        let left_arena = arena.len() as u32;
                        arena.push(Node::Leaf { weight: R::zero() });
                        arena.push(Node::Leaf { weight: R::zero() });
                        arena[node.arena as usize] = Node::Split {
                            feature: b.feature,
                            threshold: b.threshold,
                            default_left: b.default_left,
                            left: left_arena,
                            right: left_arena + 1,
                        };
                        let left_slot = next_level.len() as u32;
                        next_level.push(LevelNode {
                            arena: left_arena,
                            g: b.left_g,
                            h: b.left_h,
                        });
                        next_level.push(LevelNode {
                            arena: left_arena + 1,
                            g: b.right_g,
                            h: b.right_h,
                        });
                        routing[slot] =
                            Some((b.feature, b.threshold, b.default_left, left_slot, left_slot + 1));
                    }
                    None => {
                        arena[node.arena as usize] = Node::Leaf {
                            weight: -lr * node.g / (node.h + lambda),
                        };
                    }
                }
            }
            if next_level.is_empty() {
                level.clear();
                break;
            }
            for &r in &scratch_rows {
                let slot = row_node[r as usize];
                if slot == NO_NODE {
                    continue;
                }
                match &routing[slot as usize] {
                    Some((f, thr, default_left, ls, rs)) => {
                        let v = columns[*f as usize][r as usize];
                        let go_left = if v.is_nan() { *default_left } else { v < *thr };
                        row_node[r as usize] = if go_left { *ls } else { *rs };
                    }
                    None => row_node[r as usize] = NO_NODE,
                }
            }
            level = next_level;
        }
        // Depth limit reached: everything still open becomes a leaf.
        for node in &level {
            arena[node.arena as usize] = Node::Leaf {
                weight: -lr * node.g / (node.h + lambda),
            };
        }

        let tree = Tree { nodes: arena };
        for &r in rows {
            logits[r as usize] += tree_value_cols(&tree, columns, r as usize);
        }
        trees.push(tree);
    }

    Ok(GbdtModel {
        version: MODEL_FORMAT_VERSION,
        config: cfg.clone(),
        feature_names: feature_names.to_vec(),
        trees,
    })
}

/// Weighted logistic training loss of a model prefix; used to watch the
/// boosting objective decrease.
pub fn training_loss<R: Real>(
    model: &GbdtModel<R>,
    columns: &[Vec<R>],
    labels: &[u8],
    rows: &[u32],
    n_trees: usize,
) -> R {
    let w_pos = R::of(model.config.positive_weight);
    let mut loss = R::zero();
    let mut total_w = R::zero();
    for &r in rows {
        let r = r as usize;
        let mut z = R::of(logit(model.config.base_score));
        for tree in model.trees.iter().take(n_trees) {
            z += tree_value_cols(tree, columns, r);
        }
        let p = clamp_probability(sigmoid(z));
        let w = if labels[r] == 1 { w_pos } else { R::one() };
        let term = if labels[r] == 1 {
            -(p.ln())
        } else {
            -((R::one() - p).ln())
        };
        loss += w * term;
        total_w += w;
    }
    loss / total_w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn full_sample(cfg: GbdtConfig) -> GbdtConfig {
        GbdtConfig {
            subsample: 1.0,
            colsample_bytree: 1.0,
            ..cfg
        }
    }

    #[test]
    fn separable_1d_stump_finds_the_gap() {
        let columns: Vec<Vec<f64>> = vec![vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0]];
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let rows: Vec<u32> = (0..10).collect();
        let cfg = full_sample(GbdtConfig {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            min_child_weight: 0.5,
            ..GbdtConfig::default()
        });
        let model = fit(&columns, &names(1), &labels, &rows, &cfg).unwrap();
        match &model.trees[0].nodes[0] {
            Node::Split { threshold, .. } => assert!((threshold - 0.5).abs() < 1e-12),
            n => panic!("expected a split at the root, got {n:?}"),
        }
        // Training accuracy 1.0 at probability threshold 0.5.
        for r in 0..10 {
            let p = model.predict_proba(&[columns[0][r]]).unwrap();
            assert_eq!((p >= 0.5) as u8, labels[r]);
        }
    }

    #[test]
    fn hand_computed_stump_on_six_rows() {
        // x = 1..6, y = 0,0,0,1,1,1, unit weights, p0 = 0.5:
        //   g = +-0.5, h = 0.25 per row. Best boundary is 3|3 at x = 3.5:
        //   G_L = 1.5, H_L = 0.75, G_R = -1.5, H_R = 0.75
        //   gain = 0.5 * (2.25/1.75 + 2.25/1.75 - 0) = 9/7
        //   leaves: -lr * G/(H + 1) = -/+ lr * 6/7
        let columns: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let rows: Vec<u32> = (0..6).collect();
        let cfg = full_sample(GbdtConfig {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 0.1,
            min_child_weight: 0.5,
            positive_weight: 1.0,
            lambda: 1.0,
            ..GbdtConfig::default()
        });
        let model = fit(&columns, &names(1), &labels, &rows, &cfg).unwrap();
        let nodes = &model.trees[0].nodes;
        match &nodes[0] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 3.5).abs() < 1e-12);
                let w = 0.1 * 1.5 / 1.75;
                match (&nodes[*left as usize], &nodes[*right as usize]) {
                    (Node::Leaf { weight: wl }, Node::Leaf { weight: wr }) => {
                        assert!((wl + w).abs() < 1e-12, "left {wl}");
                        assert!((wr - w).abs() < 1e-12, "right {wr}");
                    }
                    other => panic!("expected two leaves, got {other:?}"),
                }
            }
            n => panic!("expected a split, got {n:?}"),
        }
    }

    #[test]
    fn all_missing_feature_is_never_chosen() {
        let columns: Vec<Vec<f64>> = vec![
            vec![f64::NAN; 8],
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        ];
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let rows: Vec<u32> = (0..8).collect();
        let cfg = full_sample(GbdtConfig {
            n_trees: 3,
            max_depth: 2,
            min_child_weight: 0.25,
            ..GbdtConfig::default()
        });
        let model = fit(&columns, &names(2), &labels, &rows, &cfg).unwrap();
        for tree in &model.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    assert_eq!(*feature, 1);
                }
            }
        }
    }

    #[test]
    fn missing_rows_follow_learned_direction_and_predict() {
        let columns: Vec<Vec<f64>> = vec![vec![
            1.0,
            2.0,
            3.0,
            f64::NAN,
            f64::NAN,
            4.0,
            5.0,
            6.0,
        ]];
        // Missing rows are positive, so missing should route right with the
        // high-value positives.
        let labels = vec![0, 0, 0, 1, 1, 1, 1, 1];
        let rows: Vec<u32> = (0..8).collect();
        let cfg = full_sample(GbdtConfig {
            n_trees: 5,
            max_depth: 2,
            learning_rate: 0.5,
            min_child_weight: 0.1,
            ..GbdtConfig::default()
        });
        let model = fit(&columns, &names(1), &labels, &rows, &cfg).unwrap();
        let p_missing = model.predict_proba(&[f64::NAN]).unwrap();
        assert!(p_missing > 0.5, "{p_missing}");
        assert!(p_missing > 0.0 && p_missing < 1.0);
    }

    #[test]
    fn positive_side_probability_grows_with_boosting() {
        let columns: Vec<Vec<f64>> = vec![vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0]];
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let rows: Vec<u32> = (0..10).collect();
        let cfg = full_sample(GbdtConfig {
            n_trees: 50,
            max_depth: 1,
            learning_rate: 0.5,
            min_child_weight: 0.1,
            ..GbdtConfig::default()
        });
        let model = fit(&columns, &names(1), &labels, &rows, &cfg).unwrap();
        let p = model.predict_proba(&[0.9]).unwrap();
        assert!(p > 0.9, "{p}");
    }

    #[test]
    fn training_loss_is_non_increasing() {
        // Noisy but learnable 2-feature problem.
        let mut state = 5u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 400;
        let mut c0 = Vec::new();
        let mut c1 = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let x = next() * 2.0 - 1.0;
            let z = next() * 2.0 - 1.0;
            c0.push(x);
            c1.push(z);
            labels.push((x + 0.3 * z + 0.2 * (next() - 0.5) > 0.0) as u8);
        }
        let columns = vec![c0, c1];
        let rows: Vec<u32> = (0..n as u32).collect();
        let cfg = full_sample(GbdtConfig {
            n_trees: 30,
            max_depth: 3,
            learning_rate: 0.2,
            min_child_weight: 0.1,
            ..GbdtConfig::default()
        });
        let model = fit(&columns, &names(2), &labels, &rows, &cfg).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=30 {
            let loss = training_loss(&model, &columns, &labels, &rows, k);
            assert!(loss <= prev + 1e-12, "loss rose at tree {k}: {prev} -> {loss}");
            prev = loss;
        }
    }

    #[test]
    fn fits_are_bit_identical_for_equal_seeds() {
        let mut state = 11u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 200;
        let columns: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..n).map(|_| next() * 4.0 - 2.0).collect())
            .collect();
        let labels: Vec<u8> = (0..n)
            .map(|i| (columns[0][i] + columns[3][i] > 0.0) as u8)
            .collect();
        let rows: Vec<u32> = (0..n as u32).collect();
        let cfg = GbdtConfig {
            n_trees: 10,
            max_depth: 3,
            colsample_bytree: 0.6,
            subsample: 0.7,
            min_child_weight: 0.1,
            rng_seed: 42,
            ..GbdtConfig::default()
        };
        let a = fit(&columns, &names(5), &labels, &rows, &cfg).unwrap();
        let b = fit(&columns, &names(5), &labels, &rows, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        // A different seed samples differently.
        let c = fit(
            &columns,
            &names(5),
            &labels,
            &rows,
            &GbdtConfig {
                rng_seed: 43,
                ..cfg
            },
        )
        .unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn single_class_and_empty_schema_errors() {
        let columns: Vec<Vec<f64>> = vec![vec![1.0, 2.0]];
        assert!(matches!(
            fit(&columns, &names(1), &[1, 1], &[0, 1], &GbdtConfig::default()),
            Err(Error::SingleClass)
        ));
        let no_cols: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            fit(&no_cols, &[], &[0, 1], &[0, 1], &GbdtConfig::default()),
            Err(Error::EmptySchema)
        ));
    }
}
