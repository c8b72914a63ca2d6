//! Shared fixtures for the criterion benchmarks.

use std::collections::BTreeMap;

use semtransfer::classify::{predict_attribute_scores, train_attribute_classifiers, TrainConfig};
use semtransfer::io::Document;
use semtransfer::synth::{gen_corpus, gen_dataset, CorpusPlan, JointCount, SynthConfig, SynthDataset};
use semtransfer::transfer::{dap_scores, AttributePrior};
use semtransfer::{AttributeScoreMatrix, CategoryScoreMatrix};

/// Synthetic dataset with `n_test` test instances per novel category.
pub fn dataset(n_test: usize) -> SynthDataset {
    gen_dataset(&SynthConfig { n_test, ..SynthConfig::default() }).expect("valid synth config")
}

/// Attribute scores of every instance and DAP scores of the test and
/// few-shot instances.
pub fn zero_shot_inputs(ds: &SynthDataset) -> (AttributeScoreMatrix, CategoryScoreMatrix) {
    let known: Vec<String> = ds.split.known_categories.iter().cloned().collect();
    let novel: Vec<String> = ds.split.novel_categories.iter().cloned().collect();
    let known_assoc = ds.associations.select_categories(&known).expect("known rows");
    let cfg = TrainConfig { max_iters: 200, ..TrainConfig::default() };
    let model = train_attribute_classifiers(&ds.features, &ds.split.train_instances, &known_assoc, &cfg)
        .expect("training");
    let scores = predict_attribute_scores(&model, &ds.features).expect("scoring");
    let ids: Vec<&String> = ds.split.test_instances.keys().chain(ds.split.fewshot_instances.keys()).collect();
    let subset = AttributeScoreMatrix::new(scores.table().select_rows(&ids).expect("rows")).expect("scores");
    let prior = AttributePrior::from_known(&known_assoc).expect("prior");
    let novel_assoc = ds.associations.select_categories(&novel).expect("novel rows");
    let zs = dap_scores(&subset, &novel_assoc, &prior).expect("dap");
    (scores, zs)
}

/// Corpus with `n_terms` categories and attributes and a joint count for
/// every pair.
pub fn corpus(n_terms: usize, per_term: usize) -> (CorpusPlan, Vec<Document>) {
    let cats: BTreeMap<String, usize> = (0..n_terms).map(|i| (format!("cat{i}"), per_term)).collect();
    let attrs: BTreeMap<String, usize> = (0..n_terms).map(|i| (format!("attr{i}"), per_term)).collect();
    let share = per_term / n_terms;
    let joint = cats
        .keys()
        .flat_map(|c| {
            attrs.keys().map(move |a| JointCount { category: c.clone(), attribute: a.clone(), count: share })
        })
        .collect();
    let plan = CorpusPlan { categories: cats, attributes: attrs, joint, filler_docs: per_term, seed: 0 };
    let docs = gen_corpus(&plan).expect("feasible plan");
    (plan, docs)
}
