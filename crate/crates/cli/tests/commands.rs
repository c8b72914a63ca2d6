use std::path::Path;
use std::process::{Command, Output};

use semtransfer::io;
use semtransfer::relatedness::{dice_hitcount, CorpusIndex};
use semtransfer::synth::CorpusPlan;
use serde_json::Value;

fn semtransfer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semtransfer"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_else(|| panic!("no stderr"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr `{line}` is not JSON: {e}"))
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

const PLAN: &str = r#"{
  "categories": {"horse": 4, "zebra": 6},
  "attributes": {"stripes": 5, "hooves": 7},
  "joint": [
    {"category": "horse", "attribute": "stripes", "count": 0},
    {"category": "horse", "attribute": "hooves", "count": 3},
    {"category": "zebra", "attribute": "stripes", "count": 3},
    {"category": "zebra", "attribute": "hooves", "count": 2}
  ],
  "filler_docs": 5,
  "seed": 1
}"#;

fn corpus_fixture(dir: &Path) {
    std::fs::write(dir.join("plan.json"), PLAN).unwrap();
    std::fs::write(dir.join("categories.txt"), "horse\nzebra\n").unwrap();
    std::fs::write(dir.join("attributes.txt"), "stripes\nhooves\n").unwrap();
    ok(&semtransfer(dir, &["synth", "corpus", "--plan", "plan.json", "-o", "corpus.jsonl"]));
}

#[test]
fn mined_dice_matches_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    corpus_fixture(dir.path());
    ok(&semtransfer(
        dir.path(),
        &["mine", "--measure", "dice_hit", "--categories", "categories.txt", "--terms", "attributes.txt",
          "--corpus", "corpus.jsonl", "-o", "rel.tsv"],
    ));
    let plan: CorpusPlan = serde_json::from_str(PLAN).unwrap();
    let (table, comments) = io::read_table(&dir.path().join("rel.tsv")).unwrap();
    assert!(comments.iter().any(|c| c == "measure=dice_hit"), "{comments:?}");
    for (i, c) in table.rows().iter().enumerate() {
        for (j, a) in table.cols().iter().enumerate() {
            assert!((table.get(i, j) - plan.dice(c, a)).abs() < 1e-9, "{c}/{a}");
        }
    }
    assert!((plan.dice("horse", "hooves") - 6.0 / 11.0).abs() < 1e-15);

    let docs = io::read_corpus(&dir.path().join("corpus.jsonl")).unwrap();
    let index = CorpusIndex::build(&docs).unwrap();
    assert_eq!(dice_hitcount(&index, "zebra", "stripes"), 6.0 / 11.0);
}

#[test]
fn mine_fuse_and_binarize() {
    let dir = tempfile::tempdir().unwrap();
    corpus_fixture(dir.path());
    let base = ["--categories", "categories.txt", "--terms", "attributes.txt", "--corpus", "corpus.jsonl"];
    for (m, out) in [("dice_hit", "a.tsv"), ("esa", "b.tsv")] {
        let mut args = vec!["mine", "--measure", m, "-o", out];
        args.extend(base);
        ok(&semtransfer(dir.path(), &args));
    }
    ok(&semtransfer(dir.path(), &["fuse", "-o", "fused.tsv", "a.tsv", "b.tsv"]));
    ok(&semtransfer(dir.path(), &["assoc", "--relatedness", "fused.tsv", "--policy", "topk:1", "-o", "assoc.tsv"]));
    let (t, _) = io::read_table(&dir.path().join("assoc.tsv")).unwrap();
    for j in 0..t.ncols() {
        let col: f64 = (0..t.nrows()).map(|i| t.get(i, j)).sum();
        assert_eq!(col, 1.0);
    }
}

#[test]
fn missing_corpus_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    corpus_fixture(dir.path());
    let out = semtransfer(
        dir.path(),
        &["mine", "--measure", "dice_hit", "--categories", "categories.txt", "--terms", "attributes.txt",
          "--corpus", "nowhere.jsonl", "-o", "rel.tsv"],
    );
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["code"], 2);
    assert_eq!(e["error"]["kind"], "io");
    assert!(!dir.path().join("rel.tsv").exists());
}

#[test]
fn lin_without_taxonomy_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    corpus_fixture(dir.path());
    let out = semtransfer(
        dir.path(),
        &["mine", "--measure", "lin", "--categories", "categories.txt", "--terms", "attributes.txt", "-o", "rel.tsv"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["stage"], "mine");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(semtransfer(dir.path(), &["eval", "--bogus"]).status.code(), Some(2));
}

fn write_run(dir: &Path, extra: &str) {
    std::fs::write(
        dir.join("run.json"),
        format!(
            r#"{{"output_dir": "out",
                 "dataset": {{"source": "synth", "config": {{"n_known": 8, "n_novel": 2, "n_train": 8, "n_test": 6,
                                                          "n_distractor": 2, "n_fewshot": 2, "seed": 4}}}},
                 "classifier": {{"max_iters": 200}},
                 "propagation": {{"k": 4}}{extra}}}"#
        ),
    )
    .unwrap();
}

#[test]
fn bad_alpha_names_the_propagation_stage() {
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), "");
    let out = semtransfer(dir.path(), &["pipeline", "run.json", "--set", "propagation.alpha=1.0"]);
    assert_eq!(out.status.code(), Some(3));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["stage"], "propagation");
    assert_eq!(e["error"]["kind"], "invalid_config");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn non_convergence_is_a_warning_unless_strict() {
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), "");
    let out = semtransfer(dir.path(), &["pipeline", "run.json", "--set", "propagation.max_iters=2"]);
    ok(&out);
    assert_eq!(stderr_json(&out)["warning"]["kind"], "not_converged");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["pst"]["converged"], false);

    let out = semtransfer(dir.path(), &["pipeline", "run.json", "--strict", "--set", "propagation.max_iters=2"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["kind"], "not_converged");
}

#[test]
fn stepwise_commands_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_run(d, "");
    ok(&semtransfer(d, &["pipeline", "run.json"]));
    std::fs::write(
        d.join("synth.json"),
        r#"{"n_known": 8, "n_novel": 2, "n_train": 8, "n_test": 6, "n_distractor": 2, "n_fewshot": 2, "seed": 4}"#,
    )
    .unwrap();
    std::fs::create_dir(d.join("data")).unwrap();
    ok(&semtransfer(d, &["synth", "dataset", "--config", "synth.json", "-o", "data"]));
    assert_eq!(
        std::fs::read(d.join("data/features.tsv")).unwrap(),
        std::fs::read(d.join("out/features.tsv")).unwrap()
    );
    ok(&semtransfer(
        d,
        &["train", "--features", "data/features.tsv", "--split", "data/split.json", "--associations",
          "data/associations.tsv", "--set", "max_iters=200", "-o", "model.json"],
    ));
    // the stepwise run reads features rounded to 9 significant digits
    let model = |p: &str| semtransfer::classify::AttributeModel::from_json(&std::fs::read_to_string(d.join(p)).unwrap()).unwrap();
    let (a, b) = (model("model.json"), model("out/model.json"));
    for (wa, wb) in a.weights.iter().flatten().zip(b.weights.iter().flatten()) {
        assert!((wa - wb).abs() < 1e-6, "{wa} vs {wb}");
    }
    ok(&semtransfer(d, &["score", "--model", "model.json", "--features", "data/features.tsv", "-o", "scores.tsv"]));
    ok(&semtransfer(
        d,
        &["zeroshot", "--split", "data/split.json", "--scores", "scores.tsv", "--associations",
          "data/associations.tsv", "-o", "zs.tsv"],
    ));
    ok(&semtransfer(d, &["eval", "--scores", "zs.tsv", "--split", "data/split.json", "-o", "eval.json", "--tsv", "eval.tsv"]));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    let piped: Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"], piped["zero_shot"][0]["accuracy"]);
    let auc = |v: &Value| v["mean_auc"].as_f64().unwrap();
    assert!((auc(&report) - auc(&piped["zero_shot"][0])).abs() < 1e-6);
    assert!(std::fs::read_to_string(d.join("eval.tsv")).unwrap().starts_with("# protocol=novel_only"));
}

#[test]
fn pst_command_writes_scores_graph_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_run(d, r#", "fewshot_per_category": 1"#);
    ok(&semtransfer(d, &["pipeline", "run.json"]));
    let out = semtransfer(
        d,
        &["pst", "--zeroshot", "out/zeroshot_scores.tsv", "--vectors", "out/attribute_scores.tsv", "--fewshot",
          "out/fewshot_labels.tsv", "--set", "k=4", "--predictions", "pred.tsv", "--graph", "graph.tsv", "-o", "pst.tsv"],
    );
    ok(&out);
    let graph = std::fs::read_to_string(d.join("graph.tsv")).unwrap();
    assert!(graph.lines().count() > 0);
    assert!(graph.lines().all(|l| l.split('\t').count() == 3));
    let (pst, _) = io::read_table(&d.join("pst.tsv")).unwrap();
    let (zs, _) = io::read_table(&d.join("out/zeroshot_scores.tsv")).unwrap();
    assert_eq!(pst.cols(), zs.cols());
    let preds = io::read_pairs(&d.join("pred.tsv")).unwrap();
    assert_eq!(preds.len(), pst.nrows());
}

#[test]
fn similarity_and_hierarchy_transfer_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_run(d, "");
    ok(&semtransfer(d, &["pipeline", "run.json", "--set", "transfer.method=sim", "--set", "transfer.top_k=3"]));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "sim");

    let mut edges = String::new();
    for i in 0..8 {
        edges.push_str(&format!("k{i:02}\tg{}\n", i % 2));
    }
    edges.push_str("n00\tg0\nn01\tg1\ng0\troot\ng1\troot\n");
    std::fs::write(d.join("taxonomy.tsv"), edges).unwrap();
    for mode in ["leaf", "inner", "all"] {
        let out = semtransfer(
            d,
            &["pipeline", "run.json", "--set", "transfer.method=hier", "--set", "transfer.taxonomy=taxonomy.tsv",
              "--set", &format!("transfer.hierarchy_mode={mode}"), "--set", "output_dir=hier"],
        );
        ok(&out);
        let (zs, comments) = io::read_table(&d.join("hier/zeroshot_scores.tsv")).unwrap();
        assert_eq!(zs.ncols(), 2, "{comments:?}");
    }
}
