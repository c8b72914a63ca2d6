use ndarray::{Array1, Axis};
use semtransfer::classify::{
    fit_logistic, predict_attribute_scores, train_attribute_classifiers, LogisticObjective, TrainConfig,
};
use semtransfer::synth::{gen_dataset, SynthConfig};

fn small() -> SynthConfig {
    SynthConfig { n_known: 8, n_novel: 2, n_train: 10, n_test: 5, n_distractor: 1, n_fewshot: 1, ..SynthConfig::default() }
}

#[test]
fn loss_never_increases_with_default_step() {
    let ds = gen_dataset(&small()).unwrap();
    let cfg = TrainConfig::default();
    let labels = &ds.split.train_instances;
    let rows: Vec<usize> = labels.keys().map(|i| ds.features.instances().require(i).unwrap()).collect();
    let raw = ds.features.values().select(Axis(0), &rows);
    let mean = raw.mean_axis(Axis(0)).unwrap();
    let std = raw.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let x = (&raw - &mean) / &std;
    for m in 0..ds.associations.attributes().len() {
        let t: Array1<f64> = labels
            .values()
            .map(|c| ds.associations.get(ds.associations.categories().require(c).unwrap(), m))
            .collect();
        let obj = LogisticObjective::new(x.view(), t.view(), cfg.l2).unwrap();
        let fit = fit_logistic(&obj, vec![0.0; obj.dim()], cfg.lr, 500, cfg.tol);
        for w in fit.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "attribute {m}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn random_starts_reach_the_same_optimum() {
    let ds = gen_dataset(&small()).unwrap();
    let base = TrainConfig { l2: 1e-2, tol: 1e-8, max_iters: 50_000, init_scale: 0.5, ..TrainConfig::default() };
    let a = train_attribute_classifiers(&ds.features, &ds.split.train_instances, &ds.associations, &TrainConfig { seed: 1, ..base }).unwrap();
    let b = train_attribute_classifiers(&ds.features, &ds.split.train_instances, &ds.associations, &TrainConfig { seed: 2, ..base }).unwrap();
    assert_ne!(a.weights, b.weights);
    for m in 0..a.attributes.len() {
        let dist: f64 = a.weights[m]
            .iter()
            .chain(std::iter::once(&a.bias[m]))
            .zip(b.weights[m].iter().chain(std::iter::once(&b.bias[m])))
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 1e-3, "attribute {m}: distance {dist}");
    }
}

#[test]
fn scores_strictly_inside_unit_interval() {
    let ds = gen_dataset(&small()).unwrap();
    let model = train_attribute_classifiers(&ds.features, &ds.split.train_instances, &ds.associations, &TrainConfig::default()).unwrap();
    let scores = predict_attribute_scores(&model, &ds.features).unwrap();
    assert!(scores.values().iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn training_is_independent_of_thread_count() {
    let ds = gen_dataset(&small()).unwrap();
    let cfg = TrainConfig { init_scale: 0.1, seed: 9, max_iters: 300, ..TrainConfig::default() };
    let train = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_attribute_classifiers(&ds.features, &ds.split.train_instances, &ds.associations, &cfg).unwrap())
    };
    assert_eq!(train(1), train(4));
}
