use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use semtransfer::classify::{predict_attribute_scores, train_attribute_classifiers, AttributeModel, TrainConfig};
use semtransfer::eval::{evaluate_zero_shot, Protocol};
use semtransfer::io;
use semtransfer::propagate::{pst, PropagationConfig};
use semtransfer::relatedness::{binarize, fuse_measures, BinarizePolicy, FusionMode};
use semtransfer::synth::{gen_corpus, gen_dataset, CorpusPlan, SynthConfig};
use semtransfer::transfer::HierarchyMode;
use semtransfer::{
    AssociationMatrix, AttributeScoreMatrix, CategoryScoreMatrix, DatasetSplit, Error, FeatureMatrix, Measure,
};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::config::{apply_override, MiningConfig, RunConfig, TransferConfig, TransferMethod};
use crate::error::{CliError, StageExt};
use crate::pipeline::{
    format_predictions, mine, read_labels, read_relatedness, read_terms, relatedness_comments, run_pipeline,
    summarize, zero_shot,
};

#[derive(Debug, Parser)]
#[command(name = "semtransfer", version, about = "Attribute-based zero- and few-shot transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine category x term relatedness from a corpus, taxonomy or scripts.
    Mine(MineArgs),
    /// Fuse several relatedness matrices.
    Fuse(FuseArgs),
    /// Binarize a relatedness matrix into associations.
    Assoc(AssocArgs),
    /// Train attribute classifiers on known-category instances.
    Train(TrainArgs),
    /// Score instances with a trained model.
    Score(ScoreArgs),
    /// Zero-shot scores for the novel categories.
    Zeroshot(ZeroshotArgs),
    /// Propagated semantic transfer over a k-NN graph.
    Pst(PstArgs),
    /// Evaluate category scores against a split.
    Eval(EvalArgs),
    /// Generate synthetic data.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run a whole experiment from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Repeat to mine several measures and fuse them.
    #[arg(long = "measure", required = true)]
    pub measures: Vec<Measure>,
    /// Row terms, one per line.
    #[arg(long)]
    pub categories: PathBuf,
    /// Column terms, one per line.
    #[arg(long)]
    pub terms: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// `child<TAB>parent` edges.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// `node<TAB>probability` records.
    #[arg(long)]
    pub probabilities: Option<PathBuf>,
    /// Script documents, JSON lines with `category` and `text`.
    #[arg(long)]
    pub scripts: Option<PathBuf>,
    /// Snippet window in tokens; unbounded when omitted.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value = "classifier_fusion")]
    pub fusion: FusionMode,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long, default_value = "classifier_fusion")]
    pub mode: FusionMode,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssocArgs {
    #[arg(long)]
    pub relatedness: PathBuf,
    /// `topk:K`, `threshold:T` or `mean`.
    #[arg(long)]
    pub policy: BinarizePolicy,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub associations: PathBuf,
    /// Classifier config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` override of the classifier config.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub strict: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[arg(long, default_value = "dap")]
    pub method: TransferMethod,
    #[arg(long)]
    pub split: PathBuf,
    /// Attribute scores (dap).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Category x attribute associations (dap; sim without --relatedness).
    #[arg(long)]
    pub associations: Option<PathBuf>,
    /// Uniform attribute prior (dap).
    #[arg(long)]
    pub prior: Option<f64>,
    /// Known-category scores (sim, hier).
    #[arg(long)]
    pub known_scores: Option<PathBuf>,
    /// Novel x known relatedness (sim).
    #[arg(long)]
    pub relatedness: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub probabilities: Option<PathBuf>,
    #[arg(long, default_value = "leaf")]
    pub mode: HierarchyMode,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PstArgs {
    #[arg(long)]
    pub zeroshot: PathBuf,
    /// Row vectors for the graph, usually attribute scores.
    #[arg(long)]
    pub vectors: PathBuf,
    /// `instance<TAB>category` few-shot labels.
    #[arg(long)]
    pub fewshot: Option<PathBuf>,
    /// Propagation config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "novel_only")]
    pub protocol: Protocol,
    /// Per-category metrics TSV.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Features, split and ground-truth associations.
    Dataset {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Corpus realizing a document-count plan.
    Corpus {
        #[arg(long)]
        plan: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    pub config: PathBuf,
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub strict: bool,
}

/// What a successful command has to report besides its files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    /// Set when an iterative stage stopped at its iteration limit.
    pub not_converged: Option<String>,
    pub strict: bool,
}

type CmdResult = Result<Outcome, CliError>;

fn load_config<T: DeserializeOwned>(path: Option<&Path>, overrides: &[String], stage: &'static str) -> Result<T, CliError> {
    let mut value = match path {
        Some(p) => {
            let text = io::read_to_string(p).stage(stage)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::parse(p.display().to_string(), e.to_string()))
                .stage(stage)?
        }
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut value, o).stage(stage)?;
    }
    serde_json::from_value(value)
        .map_err(|e| Error::InvalidConfig(e.to_string()))
        .stage(stage)
}

pub fn execute(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Mine(a) => cmd_mine(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Assoc(a) => cmd_assoc(a),
        Command::Train(a) => cmd_train(a),
        Command::Score(a) => cmd_score(a),
        Command::Zeroshot(a) => cmd_zeroshot(a),
        Command::Pst(a) => cmd_pst(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(s) => cmd_synth(s),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

fn cmd_mine(a: MineArgs) -> CmdResult {
    let cfg = MiningConfig {
        measures: a.measures,
        attributes: a.terms,
        corpus: a.corpus,
        taxonomy: a.taxonomy,
        probabilities: a.probabilities,
        scripts: a.scripts,
        window: a.window,
        fusion: a.fusion,
    };
    let categories = read_terms(&a.categories).stage("mine")?;
    let terms = read_terms(&cfg.attributes).stage("mine")?;
    let mined = mine(&cfg, &categories, &terms).stage("mine")?;
    let rel = if mined.len() == 1 {
        mined.into_iter().next().expect("one matrix")
    } else {
        fuse_measures(&mined, cfg.fusion).stage("fuse")?
    };
    io::write_table(&a.output, rel.table(), &relatedness_comments(&rel)).stage("write")?;
    Ok(Outcome::default())
}

fn cmd_fuse(a: FuseArgs) -> CmdResult {
    let inputs = a
        .inputs
        .iter()
        .map(|p| read_relatedness(p))
        .collect::<semtransfer::Result<Vec<_>>>()
        .stage("fuse")?;
    let rel = fuse_measures(&inputs, a.mode).stage("fuse")?;
    io::write_table(&a.output, rel.table(), &relatedness_comments(&rel)).stage("write")?;
    Ok(Outcome::default())
}

fn cmd_assoc(a: AssocArgs) -> CmdResult {
    let rel = read_relatedness(&a.relatedness).stage("binarize")?;
    let assoc = binarize(&rel, a.policy).stage("binarize")?;
    io::write_table(&a.output, assoc.table(), &[]).stage("write")?;
    Ok(Outcome::default())
}

fn read_features(path: &Path, stage: &'static str) -> Result<FeatureMatrix, CliError> {
    let (table, _) = io::read_table(path).stage(stage)?;
    FeatureMatrix::new(table).stage(stage)
}

fn read_category_scores(path: &Path, stage: &'static str) -> Result<CategoryScoreMatrix, CliError> {
    let (table, _) = io::read_table(path).stage(stage)?;
    CategoryScoreMatrix::new(table, false).stage(stage)
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let cfg: TrainConfig = load_config(a.config.as_deref(), &a.overrides, "train")?;
    cfg.validate().stage("train")?;
    let features = read_features(&a.features, "train")?;
    let split: DatasetSplit = io::read_json(&a.split).stage("train")?;
    let (table, _) = io::read_table(&a.associations).stage("train")?;
    let known: Vec<String> = split.known_categories.iter().cloned().collect();
    let assoc = AssociationMatrix::new(table)
        .and_then(|m| m.select_categories(&known))
        .stage("train")?;
    let model = train_attribute_classifiers(&features, &split.train_instances, &assoc, &cfg).stage("train")?;
    io::write_string(&a.output, &model.to_json()).stage("write")?;
    let stalled: Vec<&str> = model
        .attributes
        .iter()
        .zip(&model.meta.converged)
        .filter(|(_, &c)| !c)
        .map(|(m, _)| m.as_str())
        .collect();
    Ok(Outcome {
        not_converged: (!stalled.is_empty()).then(|| format!("classifiers for {}", stalled.join(", "))),
        strict: a.strict,
        ..Outcome::default()
    })
}

fn cmd_score(a: ScoreArgs) -> CmdResult {
    let model = AttributeModel::from_json(&io::read_to_string(&a.model).stage("score")?).stage("score")?;
    let features = read_features(&a.features, "score")?;
    let scores = predict_attribute_scores(&model, &features).stage("score")?;
    io::write_table(&a.output, scores.table(), &[]).stage("write")?;
    Ok(Outcome::default())
}

fn cmd_zeroshot(a: ZeroshotArgs) -> CmdResult {
    let split: DatasetSplit = io::read_json(&a.split).stage("transfer")?;
    let assoc = a
        .associations
        .as_deref()
        .map(|p| io::read_table(p).and_then(|(t, _)| AssociationMatrix::new(t)))
        .transpose()
        .stage("transfer")?;
    let scores = a
        .scores
        .as_deref()
        .map(|p| io::read_table(p).and_then(|(t, _)| AttributeScoreMatrix::new(t)))
        .transpose()
        .stage("transfer")?;
    let cfg = TransferConfig {
        method: a.method,
        prior: a.prior,
        top_k: a.top_k,
        relatedness: a.relatedness,
        taxonomy: a.taxonomy,
        probabilities: a.probabilities,
        hierarchy_mode: a.mode,
    };
    let known_scores = a.known_scores;
    let zs = zero_shot(&cfg, assoc.as_ref(), &split, scores.as_ref(), || {
        let path = known_scores
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("{} needs --known-scores", cfg.method.as_str())))?;
        let (t, _) = io::read_table(path)?;
        CategoryScoreMatrix::new(t, false)
    })
    .stage("transfer")?;
    io::write_table(&a.output, zs.table(), &[format!("method={}", a.method.as_str())]).stage("write")?;
    Ok(Outcome::default())
}

fn cmd_pst(a: PstArgs) -> CmdResult {
    let cfg: PropagationConfig = load_config(a.config.as_deref(), &a.overrides, "propagation")?;
    cfg.validate().stage("propagation")?;
    let zs = read_category_scores(&a.zeroshot, "propagation")?;
    let (vectors, _) = io::read_table(&a.vectors).stage("propagation")?;
    let fewshot = match &a.fewshot {
        Some(p) => read_labels(p).stage("propagation")?,
        None => BTreeMap::new(),
    };
    let r = pst(&zs, &vectors, &fewshot, &cfg).stage("propagation")?;
    io::write_table(&a.output, r.scores.table(), &[]).stage("write")?;
    if let Some(p) = &a.predictions {
        io::write_string(p, &format_predictions(&r.scores)).stage("write")?;
    }
    if let Some(p) = &a.graph {
        io::write_string(p, &r.graph.to_tsv()).stage("write")?;
    }
    Ok(Outcome {
        not_converged: (!r.converged).then(|| format!("propagation after {} iterations", r.iterations)),
        strict: a.strict,
        ..Outcome::default()
    })
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let scores = read_category_scores(&a.scores, "evaluate")?;
    let split: DatasetSplit = io::read_json(&a.split).stage("evaluate")?;
    let mut truth = split.test_instances.clone();
    truth.extend(split.fewshot_instances.iter().map(|(k, v)| (k.clone(), v.clone())));
    let report = evaluate_zero_shot(&scores, &truth, &split, a.protocol).stage("evaluate")?;
    io::write_string(&a.output, &io::to_json_pretty(&report)).stage("write")?;
    if let Some(p) = &a.tsv {
        io::write_string(p, &report.to_tsv().stage("evaluate")?).stage("write")?;
    }
    Ok(Outcome::default())
}

fn cmd_synth(s: SynthCommand) -> CmdResult {
    match s {
        SynthCommand::Dataset { config, overrides, output } => {
            let cfg: SynthConfig = load_config(config.as_deref(), &overrides, "dataset")?;
            let ds = gen_dataset(&cfg).stage("dataset")?;
            io::write_table(&output.join("features.tsv"), ds.features.table(), &[]).stage("write")?;
            io::write_table(&output.join("associations.tsv"), ds.associations.table(), &[]).stage("write")?;
            io::write_string(&output.join("split.json"), &io::to_json_pretty(&ds.split)).stage("write")?;
            io::write_string(&output.join("labels.tsv"), &io::format_pairs(&ds.labels)).stage("write")?;
            Ok(Outcome::default())
        }
        SynthCommand::Corpus { plan, output } => {
            let plan: CorpusPlan = io::read_json(&plan).stage("synth")?;
            let docs = gen_corpus(&plan).stage("synth")?;
            io::write_string(&output, &io::format_jsonl(&docs)).stage("write")?;
            Ok(Outcome::default())
        }
    }
}

fn cmd_pipeline(a: PipelineArgs) -> CmdResult {
    let cfg = RunConfig::load(&a.config, &a.overrides).stage("config")?;
    let report = run_pipeline(&cfg)?;
    let mut stalled = Vec::new();
    if !report.classifier_converged {
        stalled.push("attribute classifiers".to_string());
    }
    if let Some(p) = report.pst.as_ref().filter(|p| !p.converged) {
        stalled.push(format!("propagation after {} iterations", p.iterations));
    }
    Ok(Outcome {
        stdout: summarize(&report),
        not_converged: (!stalled.is_empty()).then(|| stalled.join("; ")),
        strict: a.strict,
    })
}
