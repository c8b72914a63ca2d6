//! Experiment configuration: one JSON document per run.
//!
//! Relative paths are resolved against the directory holding the config
//! file. `key.path=value` overrides are applied to the raw JSON before it is
//! deserialized, so they obey the same validation as the file itself.

use std::path::{Path, PathBuf};

use semtransfer::classify::TrainConfig;
use semtransfer::eval::Protocol;
use semtransfer::propagate::PropagationConfig;
use semtransfer::relatedness::{BinarizePolicy, FusionMode};
use semtransfer::synth::SynthConfig;
use semtransfer::transfer::HierarchyMode;
use semtransfer::{Error, Measure, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub associations: AssociationConfig,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    /// Propagated semantic transfer on top of the zero-shot scores; off when
    /// absent.
    #[serde(default)]
    pub propagation: Option<PropagationConfig>,
    /// Labelled instances per novel category taken from the few-shot pool.
    #[serde(default)]
    pub fewshot_per_category: usize,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<Protocol>,
}

fn default_protocols() -> Vec<Protocol> {
    vec![Protocol::NovelOnly, Protocol::WithDistractors]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synth {
        #[serde(default)]
        config: SynthConfig,
    },
    Files {
        features: PathBuf,
        split: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum AssociationConfig {
    /// Signatures of the synthetic generator.
    #[default]
    GroundTruth,
    /// Category x attribute TSV; soft values need a binarization policy.
    File {
        path: PathBuf,
        #[serde(default)]
        binarize: Option<BinarizePolicy>,
    },
    Mined {
        mining: MiningConfig,
        binarize: BinarizePolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningConfig {
    pub measures: Vec<Measure>,
    /// One attribute term per line.
    pub attributes: PathBuf,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub probabilities: Option<PathBuf>,
    #[serde(default)]
    pub scripts: Option<PathBuf>,
    /// Dice snippet window in tokens; unbounded when absent.
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default = "default_fusion")]
    pub fusion: FusionMode,
}

fn default_fusion() -> FusionMode {
    FusionMode::ClassifierFusion
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMethod {
    #[default]
    Dap,
    Sim,
    Hier,
}

impl TransferMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TransferMethod::Dap => "dap",
            TransferMethod::Sim => "sim",
            TransferMethod::Hier => "hier",
        }
    }
}

impl std::str::FromStr for TransferMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dap" => Ok(TransferMethod::Dap),
            "sim" => Ok(TransferMethod::Sim),
            "hier" => Ok(TransferMethod::Hier),
            other => Err(Error::InvalidConfig(format!("unknown transfer method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub method: TransferMethod,
    /// Uniform attribute prior for DAP; the known-category mean when absent.
    pub prior: Option<f64>,
    /// Neighbours used by direct similarity.
    pub top_k: usize,
    /// Novel x known relatedness for direct similarity; cosine between
    /// association rows when absent.
    pub relatedness: Option<PathBuf>,
    /// `child<TAB>parent` edges for hierarchy transfer.
    pub taxonomy: Option<PathBuf>,
    pub probabilities: Option<PathBuf>,
    pub hierarchy_mode: HierarchyMode,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            method: TransferMethod::Dap,
            prior: None,
            top_k: 5,
            relatedness: None,
            taxonomy: None,
            probabilities: None,
            hierarchy_mode: HierarchyMode::Leaf,
        }
    }
}

impl RunConfig {
    /// Reads a config file, applies overrides and resolves relative paths.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = semtransfer::io::read_to_string(path)?;
        let ctx = path.display().to_string();
        let mut value: Value = serde_json::from_str(&text).map_err(|e| Error::parse(&ctx, e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::parse(&ctx, e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix(&mut self.output_dir);
        if let DatasetConfig::Files { features, split } = &mut self.dataset {
            fix(features);
            fix(split);
        }
        match &mut self.associations {
            AssociationConfig::GroundTruth => {}
            AssociationConfig::File { path, .. } => fix(path),
            AssociationConfig::Mined { mining, .. } => {
                fix(&mut mining.attributes);
                fix_opt(&mut mining.corpus);
                fix_opt(&mut mining.taxonomy);
                fix_opt(&mut mining.probabilities);
                fix_opt(&mut mining.scripts);
            }
        }
        fix_opt(&mut self.transfer.relatedness);
        fix_opt(&mut self.transfer.taxonomy);
        fix_opt(&mut self.transfer.probabilities);
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON and taken as a plain
/// string when that fails. Missing or null intermediate objects are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("bad override key `{key}`")));
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override `{key}` descends into a non-object")))?;
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    if cur.is_null() {
        *cur = Value::Object(Default::default());
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::InvalidConfig(format!("override `{key}` descends into a non-object")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
