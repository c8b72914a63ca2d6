//! Deterministic synthetic datasets and corpora.
//!
//! All randomness comes from a `ChaCha8Rng` seeded from the config, so the
//! output is a pure function of the config on every platform.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{AssociationMatrix, CategoryId, DatasetSplit, FeatureMatrix, InstanceId, Registry, Table};
use crate::error::{Error, Result};
use crate::io::Document;
use crate::relatedness::tokenize;

const MAX_SIGNATURE_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_known: usize,
    pub n_novel: usize,
    /// Attribute count.
    pub m: usize,
    /// Feature dimension, at least `m`.
    pub d: usize,
    /// Training instances per known category.
    pub n_train: usize,
    /// Test instances per novel category.
    pub n_test: usize,
    /// Test instances per known category (distractors).
    pub n_distractor: usize,
    /// Few-shot pool per novel category, disjoint from the test instances.
    pub n_fewshot: usize,
    /// Per-instance probability of flipping each signature bit.
    pub flip: f64,
    /// Scale of the per-category offset in the dimensions beyond `m`.
    pub cluster_scale: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_known: 24,
            n_novel: 4,
            m: 12,
            d: 16,
            n_train: 20,
            n_test: 40,
            n_distractor: 5,
            n_fewshot: 10,
            flip: 0.1,
            cluster_scale: 1.0,
            noise: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Two novel categories with 20% attribute flip noise.
    pub fn two_cluster(seed: u64) -> Self {
        SynthConfig {
            n_novel: 2,
            flip: 0.2,
            seed,
            ..SynthConfig::default()
        }
    }

    /// No flips, no offsets, no Gaussian noise.
    pub fn noiseless(seed: u64) -> Self {
        SynthConfig {
            flip: 0.0,
            cluster_scale: 0.0,
            noise: 0.0,
            seed,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_known == 0 || self.n_novel == 0 || self.m == 0 {
            return bad("n_known, n_novel and m must be at least 1".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be at least 1".into());
        }
        if self.d < self.m {
            return bad(format!("feature dimension d = {} below attribute count m = {}", self.d, self.m));
        }
        if !(0.0..1.0).contains(&self.flip) {
            return bad(format!("flip must lie in [0, 1), got {}", self.flip));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.cluster_scale >= 0.0 && self.cluster_scale.is_finite()) {
            return bad("noise and cluster_scale must be finite and non-negative".into());
        }
        let total = self.n_known + self.n_novel;
        if self.m < usize::BITS as usize && (1usize << self.m) < total {
            return Err(Error::SignatureSpace {
                attributes: self.m,
                categories: total,
            });
        }
        Ok(())
    }
}

/// Output of [`gen_dataset`].
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub features: FeatureMatrix,
    /// True category of every instance.
    pub labels: BTreeMap<InstanceId, CategoryId>,
    /// Ground-truth binary signatures of all categories.
    pub associations: AssociationMatrix,
    pub split: DatasetSplit,
}

pub fn known_name(i: usize) -> String {
    format!("k{i:02}")
}

pub fn novel_name(i: usize) -> String {
    format!("n{i:02}")
}

pub fn attribute_name(i: usize) -> String {
    format!("a{i:02}")
}

fn draw_signatures(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<bool>> {
    let total = cfg.n_known + cfg.n_novel;
    let mut best: Vec<Vec<bool>> = Vec::new();
    for _ in 0..MAX_SIGNATURE_DRAWS {
        let mut seen = BTreeSet::new();
        let mut sigs = Vec::with_capacity(total);
        while sigs.len() < total {
            let s: Vec<bool> = (0..cfg.m).map(|_| rng.random_bool(0.5)).collect();
            if seen.insert(s.clone()) {
                sigs.push(s);
            }
        }
        best = sigs;
        // every attribute must vary over the known categories to be learnable
        let varies = (0..cfg.m).all(|a| {
            let first = best[0][a];
            best[..cfg.n_known].iter().any(|s| s[a] != first)
        });
        if varies || cfg.n_known < 2 {
            break;
        }
    }
    best
}

/// Random distinct category signatures, features `x = flip(signature)` in
/// the first `m` dimensions plus a per-category offset in the remaining
/// `d - m`, plus Gaussian noise everywhere.
///
/// Instances are ordered known train, known test, novel test, novel
/// few-shot pool, with ids such as `k03_tr_0005`.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let signatures = draw_signatures(cfg, &mut rng);
    let categories: Vec<CategoryId> = (0..cfg.n_known)
        .map(known_name)
        .chain((0..cfg.n_novel).map(novel_name))
        .collect();
    let offsets: Vec<Vec<f64>> = (0..categories.len())
        .map(|_| (cfg.m..cfg.d).map(|_| cfg.cluster_scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();

    let mut plan: Vec<(usize, &str, usize)> = Vec::new();
    for c in 0..cfg.n_known {
        plan.push((c, "tr", cfg.n_train));
    }
    for c in 0..cfg.n_known {
        plan.push((c, "te", cfg.n_distractor));
    }
    for c in cfg.n_known..categories.len() {
        plan.push((c, "te", cfg.n_test));
    }
    for c in cfg.n_known..categories.len() {
        plan.push((c, "fs", cfg.n_fewshot));
    }

    let n: usize = plan.iter().map(|p| p.2).sum();
    let mut values = Array2::<f64>::zeros((n, cfg.d));
    let mut ids = Vec::with_capacity(n);
    let mut labels = BTreeMap::new();
    let mut split = DatasetSplit {
        known_categories: categories[..cfg.n_known].iter().cloned().collect(),
        novel_categories: categories[cfg.n_known..].iter().cloned().collect(),
        train_instances: BTreeMap::new(),
        test_instances: BTreeMap::new(),
        fewshot_instances: BTreeMap::new(),
    };
    let mut row = 0;
    for (c, part, count) in plan {
        let cat = &categories[c];
        for k in 0..count {
            let id = format!("{cat}_{part}_{k:04}");
            for a in 0..cfg.m {
                let bit = signatures[c][a] ^ (cfg.flip > 0.0 && rng.random_bool(cfg.flip));
                values[[row, a]] = if bit { 1.0 } else { 0.0 };
            }
            for j in cfg.m..cfg.d {
                values[[row, j]] = offsets[c][j - cfg.m];
            }
            if cfg.noise > 0.0 {
                for j in 0..cfg.d {
                    values[[row, j]] += cfg.noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let target = match part {
                "tr" => &mut split.train_instances,
                "te" => &mut split.test_instances,
                _ => &mut split.fewshot_instances,
            };
            target.insert(id.clone(), cat.clone());
            labels.insert(id.clone(), cat.clone());
            ids.push(id);
            row += 1;
        }
    }

    let features = FeatureMatrix::from_array(Registry::new(ids)?, values)?;
    let assoc = Array2::from_shape_fn((categories.len(), cfg.m), |(c, a)| {
        if signatures[c][a] {
            1.0
        } else {
            0.0
        }
    });
    let associations = AssociationMatrix::binary(Table::new(
        Registry::new(&categories)?,
        Registry::new((0..cfg.m).map(attribute_name))?,
        assoc,
    )?)?;
    Ok(SynthDataset {
        features,
        labels,
        associations,
        split,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointCount {
    pub category: String,
    pub attribute: String,
    pub count: usize,
}

/// Exact document counts to realize in a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPlan {
    /// Documents containing each category term.
    pub categories: BTreeMap<String, usize>,
    /// Documents containing each attribute term.
    pub attributes: BTreeMap<String, usize>,
    /// Documents containing both; unlisted pairs are zero.
    #[serde(default)]
    pub joint: Vec<JointCount>,
    /// Documents with filler tokens only.
    #[serde(default)]
    pub filler_docs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CorpusPlan {
    pub fn joint_count(&self, category: &str, attribute: &str) -> usize {
        self.joint
            .iter()
            .filter(|j| j.category == category && j.attribute == attribute)
            .map(|j| j.count)
            .sum()
    }

    /// Dice value the plan implies for a term pair.
    pub fn dice(&self, category: &str, attribute: &str) -> f64 {
        let hc = self.categories.get(category).copied().unwrap_or(0);
        let ha = self.attributes.get(attribute).copied().unwrap_or(0);
        if hc + ha == 0 {
            return 0.0;
        }
        2.0 * self.joint_count(category, attribute) as f64 / (hc + ha) as f64
    }

    fn validate(&self) -> Result<()> {
        let mut terms = BTreeSet::new();
        for t in self.categories.keys().chain(self.attributes.keys()) {
            let toks = tokenize(t);
            if toks.len() != 1 || toks[0] != *t {
                return Err(Error::InfeasiblePlan(format!(
                    "term `{t}` must be a single lowercase token"
                )));
            }
            if !terms.insert(t.as_str()) {
                return Err(Error::InfeasiblePlan(format!("term `{t}` is both category and attribute")));
            }
            if t.starts_with("zq") {
                return Err(Error::InfeasiblePlan(format!("term `{t}` collides with filler tokens")));
            }
        }
        let mut used_c: BTreeMap<&str, usize> = BTreeMap::new();
        let mut used_a: BTreeMap<&str, usize> = BTreeMap::new();
        for j in &self.joint {
            if !self.categories.contains_key(&j.category) {
                return Err(Error::InfeasiblePlan(format!("unknown category `{}`", j.category)));
            }
            if !self.attributes.contains_key(&j.attribute) {
                return Err(Error::InfeasiblePlan(format!("unknown attribute `{}`", j.attribute)));
            }
            *used_c.entry(&j.category).or_default() += j.count;
            *used_a.entry(&j.attribute).or_default() += j.count;
        }
        for (c, used) in used_c {
            if used > self.categories[c] {
                return Err(Error::InfeasiblePlan(format!(
                    "joint counts of `{c}` sum to {used} > marginal {}",
                    self.categories[c]
                )));
            }
        }
        for (a, used) in used_a {
            if used > self.attributes[a] {
                return Err(Error::InfeasiblePlan(format!(
                    "joint counts of `{a}` sum to {used} > marginal {}",
                    self.attributes[a]
                )));
            }
        }
        Ok(())
    }
}

fn filler(i: usize) -> String {
    format!("zq{i}")
}

/// Emits a corpus that realizes the plan exactly: every document holds at
/// most one category and one attribute term plus filler tokens. Document
/// order and token order are shuffled with the plan seed.
pub fn gen_corpus(plan: &CorpusPlan) -> Result<Vec<Document>> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut docs: Vec<Vec<String>> = Vec::new();
    let mut left_c = plan.categories.clone();
    let mut left_a = plan.attributes.clone();
    for j in &plan.joint {
        for _ in 0..j.count {
            docs.push(vec![j.category.clone(), j.attribute.clone()]);
        }
        *left_c.get_mut(&j.category).expect("validated") -= j.count;
        *left_a.get_mut(&j.attribute).expect("validated") -= j.count;
    }
    for (t, left) in left_c.into_iter().chain(left_a) {
        for _ in 0..left {
            docs.push(vec![t.clone()]);
        }
    }
    for _ in 0..plan.filler_docs {
        docs.push(Vec::new());
    }
    let mut out = Vec::with_capacity(docs.len());
    docs.shuffle(&mut rng);
    for (i, mut tokens) in docs.into_iter().enumerate() {
        let n_fill = rng.random_range(1..=4);
        tokens.extend((0..n_fill).map(|_| filler(rng.random_range(0..16))));
        tokens.shuffle(&mut rng);
        out.push(Document {
            id: format!("doc{i:05}"),
            text: tokens.join(" "),
        });
    }
    Ok(out)
}
