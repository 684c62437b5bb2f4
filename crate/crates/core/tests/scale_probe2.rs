use std::collections::BTreeSet;
use mingle_core::features::{build_feature_table, FeatureGroup, FeatureParams};
use mingle_core::gbdt::{GbdtConfig, Node};
use mingle_core::eval::average_precision;
use mingle_core::pipeline::{auto_positive_weight, split_pairs};
use mingle_core::preprocess::{preprocess, PreprocessConfig};
use mingle_core::sim::{simulate, ScenarioConfig};

#[test]
#[ignore]
fn motion_leak_diagnostic() {
    let cfg = ScenarioConfig { rng_seed: 101, ..Default::default() };
    let ds = simulate(&cfg).unwrap();
    let grid = ds.labels.clone().unwrap();
    let clean = preprocess(&ds, &PreprocessConfig::default()).unwrap();
    let groups: BTreeSet<FeatureGroup> = [FeatureGroup::DevicePosition, FeatureGroup::Motion].into_iter().collect();
    let table = build_feature_table(&clean, &grid, &ds.participants, &groups, &FeatureParams::default());
    let prevalence = table.labels.iter().filter(|&&y| y==1).count() as f64 / table.labels.len() as f64;
    println!("prevalence {:.4} bar {:.4}", prevalence, prevalence*1.5);

    let (test_pairs, train_pairs) = split_pairs(table.pair_keys.len(), 0.2, 1);
    let w = auto_positive_weight(&table.labels).unwrap();
    let gcfg = GbdtConfig { positive_weight: w, rng_seed: 3, ..GbdtConfig::default() };
    let names: Vec<String> = table.schema.names().map(str::to_string).collect();
    let rows: Vec<u32> = train_pairs.iter().flat_map(|&p| (p*table.duration_s) as u32..((p+1)*table.duration_s) as u32).collect();
    let model = mingle_core::gbdt::fit(&table.columns, &names, &table.labels, &rows, &gcfg).unwrap();

    let mut use_count = vec![0usize; names.len()];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, .. } = node { use_count[*feature as usize] += 1; }
        }
    }
    let mut ranked: Vec<(usize, &String)> = use_count.iter().copied().zip(names.iter()).filter(|(c,_)| *c>0).collect();
    ranked.sort_by(|a,b| b.0.cmp(&a.0));
    for (c, n) in ranked.iter().take(12) { println!("splits {c:3} {n}"); }

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for &p in &test_pairs {
        for s in 0..table.duration_s {
            let r = p * table.duration_s + s;
            let z = mingle_core::gbdt::predict_logit_cols(&model, &table.columns, r);
            scores.push(mingle_core::gbdt::sigmoid(z));
            labels.push(table.labels[r]);
        }
    }
    println!("motion+pos AP {:.4}", average_precision(&scores, &labels).unwrap());

    // Single-feature APs: rank rows by each feature alone (and negated).
    for (slot, name) in names.iter().enumerate() {
        let mut s = Vec::new(); let mut l = Vec::new();
        for &p in &test_pairs { for sec in 0..table.duration_s { let r = p*table.duration_s+sec;
            let v = table.columns[slot][r]; if v.is_nan() { s.push(-1e18); } else { s.push(-v); } l.push(table.labels[r]); } }
        let ap_neg = average_precision(&s, &l).unwrap();
        for v in s.iter_mut() { *v = -*v; }
        let ap_pos = average_precision(&s, &l).unwrap();
        let best = ap_neg.max(ap_pos);
        if best > prevalence * 1.4 { println!("feature {name}: ap {:.4}", best); }
    }
}
