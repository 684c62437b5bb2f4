use std::time::Instant;
use mingle_core::features::{build_feature_table, default_groups, FeatureParams};
use mingle_core::gbdt::{cross_validate, GbdtConfig};
use mingle_core::eval::{average_precision, best_resolution, default_gamma_grid, sweep_resolution};
use mingle_core::pipeline::{auto_positive_weight, split_pairs};
use mingle_core::preprocess::{preprocess, PreprocessConfig};
use mingle_core::proximity::NormalizedProximity;
use mingle_core::sim::{simulate, ScenarioConfig};

#[test]
#[ignore]
fn criterion5_gap_probe() {
    let cfg = ScenarioConfig { rng_seed: 202, ..Default::default() };
    let ds = simulate(&cfg).unwrap();
    let grid = ds.labels.clone().unwrap();
    let clean = preprocess(&ds, &PreprocessConfig::default()).unwrap();
    let table = build_feature_table(&clean, &grid, &ds.participants, &default_groups(), &FeatureParams::default());
    let (test_pairs, train_pairs) = split_pairs(table.pair_keys.len(), 0.2, 1);
    let w = auto_positive_weight(&table.labels).unwrap();
    let gcfg = GbdtConfig { positive_weight: w, rng_seed: 3, ..GbdtConfig::default() };
    let names: Vec<String> = table.schema.names().map(str::to_string).collect();
    let rows: Vec<u32> = train_pairs.iter().flat_map(|&p| (p*table.duration_s) as u32..((p+1)*table.duration_s) as u32).collect();
    let model = mingle_core::gbdt::fit(&table.columns, &names, &table.labels, &rows, &gcfg).unwrap();
    let dists: Vec<Vec<f64>> = (0..table.pair_keys.len()).map(|p| (0..table.duration_s).map(|s| clean.pair_distance(p, s)).collect()).collect();
    let np = NormalizedProximity::fit(dists.iter().flatten().copied()).unwrap();
    let mut scores = Vec::new(); let mut np_scores = Vec::new(); let mut labels = Vec::new();
    for &p in &test_pairs { for s in 0..table.duration_s { let r = p*table.duration_s+s;
        scores.push(mingle_core::gbdt::sigmoid(mingle_core::gbdt::predict_logit_cols(&model, &table.columns, r)));
        np_scores.push(np.score(dists[p][s])); labels.push(table.labels[r]); } }
    let prev = labels.iter().filter(|&&y| y==1).count() as f64 / labels.len() as f64;
    println!("CRIT5: gbdt {:.4} np {:.4} npc {:.4}", average_precision(&scores,&labels).unwrap(), average_precision(&np_scores,&labels).unwrap(), prev);
}

#[test]
#[ignore]
fn criterion7_group_probe() {
    let t0 = Instant::now();
    let cfg = ScenarioConfig { rssi_noise_sigma: 3.0, rng_seed: 303, ..Default::default() };
    let ds = simulate(&cfg).unwrap();
    let grid = ds.labels.clone().unwrap();
    let clean = preprocess(&ds, &PreprocessConfig::default()).unwrap();
    let table = build_feature_table(&clean, &grid, &ds.participants, &default_groups(), &FeatureParams::default());
    let all_pairs: Vec<usize> = (0..table.pair_keys.len()).collect();
    let w = auto_positive_weight(&table.labels).unwrap();
    let gcfg = GbdtConfig { positive_weight: w, rng_seed: 3, ..GbdtConfig::default() };
    let cv = cross_validate(&table, &all_pairs, &gcfg, 4, 11).unwrap();
    println!("setup+cv: {:.0}s", t0.elapsed().as_secs_f64());

    let dists: Vec<Vec<f64>> = (0..table.pair_keys.len()).map(|p| (0..table.duration_s).map(|s| clean.pair_distance(p, s)).collect()).collect();
    let np = NormalizedProximity::fit(dists.iter().flatten().copied()).unwrap();
    let per_second = |scores: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..table.duration_s).map(|s| (0..table.pair_keys.len()).map(|p| scores(p, s)).collect()).collect()
    };
    let p_gbdt = per_second(&|p, s| cv.proba[p*table.duration_s+s]);
    let p_np = per_second(&|p, s| np.score(dists[p][s]));
    let gammas = default_gamma_grid();
    let t1 = Instant::now();
    let sweep_g = sweep_resolution(&p_gbdt, &grid, &gammas, 0.05, 2, 99);
    let sweep_n = sweep_resolution(&p_np, &grid, &gammas, 0.05, 2, 99);
    println!("sweeps: {:.0}s", t1.elapsed().as_secs_f64());
    for p in &sweep_g { println!("gbdt gamma {:.1}: node {:.4} group {:.4}", p.gamma, p.node_accuracy, p.group_accuracy); }
    let bg = best_resolution(&sweep_g).unwrap();
    let bn = best_resolution(&sweep_n).unwrap();
    println!("CRIT7: gbdt best γ={:.1} node {:.4} group {:.4} | np best γ={:.1} node {:.4} group {:.4}", bg.gamma, bg.node_accuracy, bg.group_accuracy, bn.gamma, bn.node_accuracy, bn.group_accuracy);
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
