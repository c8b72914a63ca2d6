//! End-to-end run: dataset, associations, attribute classifiers, zero-shot
//! transfer, optional propagation and evaluation. Every intermediate result
//! is written to the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use semtransfer::classify::{
    one_vs_rest, predict_attribute_scores, predict_category_posteriors, train_attribute_classifiers,
    TrainConfig,
};
use semtransfer::eval::{evaluate_zero_shot, EvalReport};
use semtransfer::io::{self, format_number};
use semtransfer::propagate::pst;
use semtransfer::relatedness::{
    binarize, fuse_measures, group_scripts, tfidf_associations, CorpusIndex, Miner, Taxonomy, Window,
};
use semtransfer::synth::gen_dataset;
use semtransfer::transfer::{dap_scores, direct_similarity_scores, hierarchy_transfer, AttributePrior};
use semtransfer::{
    AssociationMatrix, AttributeScoreMatrix, CategoryId, CategoryScoreMatrix, DatasetSplit, Error,
    FeatureMatrix, InstanceId, Measure, Registry, RelatednessMatrix, Result, Table,
};
use serde::{Deserialize, Serialize};

use crate::config::{AssociationConfig, DatasetConfig, MiningConfig, RunConfig, TransferConfig, TransferMethod};
use crate::error::{CliError, StageExt};

/// One term per line; blank lines and `#` comments are skipped.
pub fn read_terms(path: &Path) -> Result<Vec<String>> {
    Ok(io::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<InstanceId, CategoryId>> {
    let mut out = BTreeMap::new();
    for (inst, cat) in io::read_pairs(path)? {
        if out.insert(inst.clone(), cat).is_some() {
            return Err(Error::DuplicateId(inst));
        }
    }
    Ok(out)
}

pub fn read_taxonomy(edges: &Path, probabilities: Option<&Path>) -> Result<Taxonomy> {
    let edges = io::read_pairs(edges)?;
    let probs = probabilities.map(io::read_probabilities).transpose()?;
    Taxonomy::new(&edges, probs.as_deref())
}

/// Reads a relatedness TSV; the measure comes from a `measure=` comment.
pub fn read_relatedness(path: &Path) -> Result<RelatednessMatrix> {
    let (table, comments) = io::read_table(path)?;
    let measure = comments
        .iter()
        .find_map(|c| c.strip_prefix("measure="))
        .map(|m| m.trim().parse())
        .transpose()?
        .unwrap_or(Measure::Fused);
    RelatednessMatrix::new(table, measure)
}

pub fn relatedness_comments(rel: &RelatednessMatrix) -> Vec<String> {
    vec![format!("measure={}", rel.measure())]
}

/// Mines one relatedness matrix per configured measure.
pub fn mine(cfg: &MiningConfig, categories: &[String], attributes: &[String]) -> Result<Vec<RelatednessMatrix>> {
    let mut index: Option<CorpusIndex> = None;
    let mut out = Vec::with_capacity(cfg.measures.len());
    for &measure in &cfg.measures {
        let needs_corpus = matches!(measure, Measure::DiceHit | Measure::DiceSnippet | Measure::Esa);
        if needs_corpus && index.is_none() {
            let path = cfg
                .corpus
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig(format!("measure {measure} needs a corpus")))?;
            index = Some(CorpusIndex::build(&io::read_corpus(path)?)?);
        }
        let rel = match measure {
            Measure::DiceHit => Miner::DiceHit(index.as_ref().expect("built")).matrix(categories, attributes)?,
            Measure::DiceSnippet => {
                let window = cfg.window.map_or(Window::Unbounded, Window::Tokens);
                Miner::DiceSnippet(index.as_ref().expect("built"), window).matrix(categories, attributes)?
            }
            Measure::Esa => Miner::Esa(index.as_ref().expect("built")).matrix(categories, attributes)?,
            Measure::Lin => {
                let path = cfg
                    .taxonomy
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("measure lin needs a taxonomy".into()))?;
                let tax = read_taxonomy(path, cfg.probabilities.as_deref())?;
                Miner::Lin(&tax).matrix(categories, attributes)?
            }
            Measure::Tfidf => {
                let path = cfg
                    .scripts
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("measure tfidf needs script documents".into()))?;
                let grouped = group_scripts(&io::read_scripts(path)?);
                let rel = tfidf_associations(&grouped, attributes)?;
                let table = rel.table().select_rows(categories)?;
                RelatednessMatrix::new(table, Measure::Tfidf)?
            }
            Measure::Fused => {
                return Err(Error::InvalidConfig("`fused` is produced by fusion, not mined".into()))
            }
        };
        out.push(rel);
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("no relatedness measures configured".into()));
    }
    Ok(out)
}

/// Cosine similarity between association rows, novel x known.
pub fn association_cosine(assoc: &AssociationMatrix, novel: &[String], known: &[String]) -> Result<RelatednessMatrix> {
    let v = assoc.values();
    let rows = novel
        .iter()
        .map(|c| assoc.categories().require(c))
        .collect::<Result<Vec<_>>>()?;
    let cols = known
        .iter()
        .map(|c| assoc.categories().require(c))
        .collect::<Result<Vec<_>>>()?;
    let values = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
        let a = v.row(rows[i]);
        let b = v.row(cols[j]);
        let na = a.dot(&a).sqrt();
        let nb = b.dot(&b).sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (a.dot(&b) / (na * nb)).clamp(0.0, 1.0)
        }
    });
    RelatednessMatrix::new(Table::new(Registry::new(novel)?, Registry::new(known)?, values)?, Measure::Fused)
}

/// Category-level classifiers on the known categories, applied to `features`.
pub fn known_category_scores(
    features: &FeatureMatrix,
    train: &BTreeMap<InstanceId, CategoryId>,
    known: &[String],
    targets: &FeatureMatrix,
    cfg: &TrainConfig,
) -> Result<CategoryScoreMatrix> {
    let model = train_attribute_classifiers(features, train, &one_vs_rest(known)?, cfg)?;
    predict_category_posteriors(&model, targets)
}

/// Zero-shot scores of the novel categories by the configured method.
pub fn zero_shot(
    cfg: &TransferConfig,
    assoc: Option<&AssociationMatrix>,
    split: &DatasetSplit,
    attribute_scores: Option<&AttributeScoreMatrix>,
    known_scores: impl FnOnce() -> Result<CategoryScoreMatrix>,
) -> Result<CategoryScoreMatrix> {
    let known: Vec<String> = split.known_categories.iter().cloned().collect();
    let novel: Vec<String> = split.novel_categories.iter().cloned().collect();
    let need_assoc = || assoc.ok_or_else(|| Error::InvalidConfig(format!("{} needs associations", cfg.method.as_str())));
    match cfg.method {
        TransferMethod::Dap => {
            let assoc = need_assoc()?;
            let novel_assoc = assoc.select_categories(&novel)?;
            let prior = match cfg.prior {
                Some(p) => AttributePrior::uniform(assoc.attributes().clone(), p)?,
                None => AttributePrior::from_known(&assoc.select_categories(&known)?)?,
            };
            let scores = attribute_scores
                .ok_or_else(|| Error::InvalidConfig("dap needs attribute scores".into()))?;
            dap_scores(scores, &novel_assoc, &prior)
        }
        TransferMethod::Sim => {
            let rel = match &cfg.relatedness {
                Some(path) => {
                    let rel = read_relatedness(path)?;
                    let table = rel.table().select_rows(&novel)?.select_cols(&known)?;
                    RelatednessMatrix::new(table, rel.measure())?
                }
                None => association_cosine(need_assoc()?, &novel, &known)?,
            };
            direct_similarity_scores(&known_scores()?, &rel, cfg.top_k)
        }
        TransferMethod::Hier => {
            let path = cfg
                .taxonomy
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("hierarchy transfer needs a taxonomy".into()))?;
            let tax = read_taxonomy(path, cfg.probabilities.as_deref())?;
            hierarchy_transfer(&tax, &known_scores()?, &novel, cfg.hierarchy_mode)
        }
    }
}

/// The first `per_category` few-shot pool instances (in id order) of every
/// novel category.
pub fn select_fewshot(split: &DatasetSplit, per_category: usize) -> BTreeMap<InstanceId, CategoryId> {
    let mut taken: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (inst, cat) in &split.fewshot_instances {
        if !split.novel_categories.contains(cat) {
            continue;
        }
        let n = taken.entry(cat).or_default();
        if *n < per_category {
            *n += 1;
            out.insert(inst.clone(), cat.clone());
        }
    }
    out
}

/// Arg-max category per row as `instance<TAB>category` lines.
pub fn format_predictions(scores: &CategoryScoreMatrix) -> String {
    let mut out = String::new();
    for (inst, z) in scores.instances().iter().zip(scores.argmax()) {
        out.push_str(inst);
        out.push('\t');
        out.push_str(scores.categories().name(z));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub method: String,
    pub fewshot_per_category: usize,
    pub n_transductive: usize,
    pub classifier_converged: bool,
    pub zero_shot: Vec<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pst: Option<PstSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PstSummary {
    pub converged: bool,
    pub iterations: usize,
    pub n_clamped: usize,
    pub reports: Vec<EvalReport>,
}

impl PipelineReport {
    pub fn converged(&self) -> bool {
        self.classifier_converged && self.pst.as_ref().is_none_or(|p| p.converged)
    }

    /// Accuracy of the final stage under the first protocol.
    pub fn final_accuracy(&self) -> f64 {
        let reports = self.pst.as_ref().map_or(&self.zero_shot, |p| &p.reports);
        reports.first().map_or(0.0, |r| r.accuracy)
    }
}

struct Output<'a> {
    dir: &'a Path,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, text: &str) -> std::result::Result<(), CliError> {
        io::write_string(&self.path(name), text).stage("write")
    }

    fn table(&self, name: &str, table: &Table, comments: &[String]) -> std::result::Result<(), CliError> {
        io::write_table(&self.path(name), table, comments).stage("write")
    }
}

fn validate(cfg: &RunConfig) -> std::result::Result<(), CliError> {
    if let DatasetConfig::Synth { config } = &cfg.dataset {
        config.validate().stage("dataset")?;
    }
    cfg.classifier.validate().stage("train")?;
    if cfg.transfer.top_k == 0 {
        return Err(Error::InvalidConfig("transfer top_k must be at least 1".into())).stage("transfer");
    }
    if let Some(p) = cfg.transfer.prior {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidConfig(format!("transfer prior must lie in (0, 1), got {p}"))).stage("transfer");
        }
    }
    if let Some(p) = &cfg.propagation {
        p.validate().stage("propagation")?;
    }
    if cfg.protocols.is_empty() {
        return Err(Error::InvalidConfig("no evaluation protocols".into())).stage("evaluate");
    }
    Ok(())
}

/// Runs the whole pipeline described by `cfg` and writes its artifacts.
pub fn run_pipeline(cfg: &RunConfig) -> std::result::Result<PipelineReport, CliError> {
    validate(cfg)?;
    let out = Output { dir: &cfg.output_dir };

    // dataset
    let (features, split, ground_truth) = match &cfg.dataset {
        DatasetConfig::Synth { config } => {
            let ds = gen_dataset(config).stage("dataset")?;
            out.table("features.tsv", ds.features.table(), &[])?;
            out.text("split.json", &io::to_json_pretty(&ds.split))?;
            (ds.features, ds.split, Some(ds.associations))
        }
        DatasetConfig::Files { features, split } => {
            let (table, _) = io::read_table(features).stage("dataset")?;
            let split: DatasetSplit = io::read_json(split).stage("dataset")?;
            (FeatureMatrix::new(table).stage("dataset")?, split, None)
        }
    };
    let mut truth = split.train_instances.clone();
    truth.extend(split.test_instances.iter().map(|(a, b)| (a.clone(), b.clone())));
    truth.extend(split.fewshot_instances.iter().map(|(a, b)| (a.clone(), b.clone())));
    let known: Vec<String> = split.known_categories.iter().cloned().collect();
    let novel: Vec<String> = split.novel_categories.iter().cloned().collect();
    let all_categories: Vec<String> = known.iter().chain(&novel).cloned().collect();

    // associations
    let assoc = match &cfg.associations {
        AssociationConfig::GroundTruth => ground_truth
            .ok_or_else(|| Error::InvalidConfig("ground-truth associations need a synthetic dataset".into()))
            .stage("associations")?,
        AssociationConfig::File { path, binarize: policy } => {
            let (table, _) = io::read_table(path).stage("associations")?;
            match policy {
                Some(p) => {
                    let rel = RelatednessMatrix::new(table, Measure::Fused).stage("binarize")?;
                    binarize(&rel, *p).stage("binarize")?
                }
                None => AssociationMatrix::new(table).stage("associations")?,
            }
        }
        AssociationConfig::Mined { mining, binarize: policy } => {
            let attributes = read_terms(&mining.attributes).stage("mine")?;
            let mined = mine(mining, &all_categories, &attributes).stage("mine")?;
            let rel = if mined.len() == 1 {
                mined.into_iter().next().expect("one matrix")
            } else {
                fuse_measures(&mined, mining.fusion).stage("mine")?
            };
            out.table("relatedness.tsv", rel.table(), &relatedness_comments(&rel))?;
            binarize(&rel, *policy).stage("binarize")?
        }
    };
    let assoc = assoc.select_categories(&all_categories).stage("associations")?;
    out.table("associations.tsv", assoc.table(), &[])?;
    let violations = semtransfer::validate_split(&split, &assoc);
    if let Some(v) = violations.first() {
        return Err(Error::InvalidValue(v.to_string())).stage("dataset");
    }

    // train
    let known_assoc = assoc.select_categories(&known).stage("train")?;
    let model = train_attribute_classifiers(&features, &split.train_instances, &known_assoc, &cfg.classifier)
        .stage("train")?;
    out.text("model.json", &model.to_json())?;
    let classifier_converged = model.meta.converged.iter().all(|&c| c);

    // score the transductive set: test instances, then the few-shot pool
    let mut ids: Vec<String> = split.test_instances.keys().cloned().collect();
    ids.extend(split.fewshot_instances.keys().filter(|k| !split.test_instances.contains_key(*k)).cloned());
    let targets = FeatureMatrix::new(features.table().select_rows(&ids).stage("score")?).stage("score")?;
    let attribute_scores = predict_attribute_scores(&model, &targets).stage("score")?;
    out.table("attribute_scores.tsv", attribute_scores.table(), &[])?;

    // transfer
    let zs = zero_shot(&cfg.transfer, Some(&assoc), &split, Some(&attribute_scores), || {
        known_category_scores(&features, &split.train_instances, &known, &targets, &cfg.classifier)
    })
    .stage("transfer")?;
    out.table("zeroshot_scores.tsv", zs.table(), &[format!("method={}", cfg.transfer.method.as_str())])?;

    let evaluate = |scores: &CategoryScoreMatrix, prefix: &str| -> std::result::Result<Vec<EvalReport>, CliError> {
        let mut reports = Vec::new();
        for &p in &cfg.protocols {
            let r = evaluate_zero_shot(scores, &truth, &split, p).stage("evaluate")?;
            out.text(&format!("{prefix}_{}.tsv", p.as_str()), &r.to_tsv().stage("evaluate")?)?;
            reports.push(r);
        }
        Ok(reports)
    };
    let zero_shot_reports = evaluate(&zs, "metrics_zeroshot")?;

    // propagation
    let mut final_scores = zs.clone();
    let pst_summary = match &cfg.propagation {
        None => None,
        Some(pcfg) => {
            let fewshot = select_fewshot(&split, cfg.fewshot_per_category);
            out.text("fewshot_labels.tsv", &io::format_pairs(&fewshot))?;
            let r = pst(&zs, attribute_scores.table(), &fewshot, pcfg).stage("propagation")?;
            out.table("pst_scores.tsv", r.scores.table(), &[])?;
            out.text("graph.tsv", &r.graph.to_tsv())?;
            let reports = evaluate(&r.scores, "metrics_pst")?;
            final_scores = r.scores;
            Some(PstSummary {
                converged: r.converged,
                iterations: r.iterations,
                n_clamped: fewshot.len(),
                reports,
            })
        }
    };
    out.text("predictions.tsv", &format_predictions(&final_scores))?;

    let report = PipelineReport {
        method: cfg.transfer.method.as_str().to_string(),
        fewshot_per_category: cfg.fewshot_per_category,
        n_transductive: ids.len(),
        classifier_converged,
        zero_shot: zero_shot_reports,
        pst: pst_summary,
    };
    out.text("report.json", &io::to_json_pretty(&report))?;
    Ok(report)
}

/// `mean_auc` and accuracy of each report as a short human summary.
pub fn summarize(report: &PipelineReport) -> String {
    let mut s = String::new();
    let mut line = |stage: &str, r: &EvalReport| {
        s.push_str(&format!(
            "{stage}\t{}\tmean_auc={}\taccuracy={}\n",
            r.protocol.as_str(),
            format_number(r.mean_auc),
            format_number(r.accuracy)
        ));
    };
    for r in &report.zero_shot {
        line(&report.method, r);
    }
    if let Some(p) = &report.pst {
        for r in &p.reports {
            line("pst", r);
        }
    }
    s
}
