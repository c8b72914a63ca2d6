//! Zero-shot scoring of novel categories.
//!
//! * [`dap_scores`]: direct attribute prediction, per-instance log-posteriors
//!   `sum_m a^z_m ln(p(a_m|x)/p(a_m)) + (1 - a^z_m) ln((1 - p(a_m|x))/(1 - p(a_m)))`.
//! * [`direct_similarity_scores`]: weighted combination of the most related
//!   known categories' scores.
//! * [`hierarchy_transfer`]: scores from known leaves near the novel leaf in
//!   a taxonomy.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{
    AssociationMatrix, AttributeScoreMatrix, CategoryId, CategoryScoreMatrix, Registry,
    RelatednessMatrix, Table,
};
use crate::error::{Error, Result};
use crate::relatedness::Taxonomy;

const SCORE_CLAMP: f64 = 1e-9;

/// Prior `p(a_m)` per attribute, strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttributePrior {
    attributes: Registry,
    values: Vec<f64>,
}

impl AttributePrior {
    pub fn new(attributes: Registry, values: Vec<f64>) -> Result<Self> {
        if attributes.len() != values.len() {
            return Err(Error::Dimension("prior length differs from attribute count".into()));
        }
        if let Some(v) = values.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::InvalidValue(format!("attribute prior {v} outside (0, 1)")));
        }
        Ok(AttributePrior { attributes, values })
    }

    pub fn uniform(attributes: Registry, p: f64) -> Result<Self> {
        let n = attributes.len();
        Self::new(attributes, vec![p; n])
    }

    /// Empirical mean of the known categories' associations, clamped to
    /// [0.05, 0.95]; attributes that are constant over the known categories
    /// fall back to 0.5.
    pub fn from_known(known: &AssociationMatrix) -> Result<Self> {
        let v = known.values();
        let n = v.nrows();
        let values = v
            .columns()
            .into_iter()
            .map(|col| {
                let mean = col.sum() / n as f64;
                if !mean.is_finite() || col.iter().all(|&x| x == col[0]) {
                    0.5
                } else {
                    mean.clamp(0.05, 0.95)
                }
            })
            .collect();
        Self::new(known.attributes().clone(), values)
    }

    pub fn attributes(&self) -> &Registry {
        &self.attributes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Direct attribute prediction log-posteriors (unnormalized). Scores exactly
/// 0 or 1 are clamped to `[1e-9, 1 - 1e-9]`.
///
/// Attributes are matched by name; the association's attributes must all be
/// present in `scores` and `prior`.
pub fn dap_scores(
    scores: &AttributeScoreMatrix,
    novel_assoc: &AssociationMatrix,
    prior: &AttributePrior,
) -> Result<CategoryScoreMatrix> {
    if !novel_assoc.is_binary() {
        return Err(Error::InvalidValue("DAP needs binary associations".into()));
    }
    let attrs = novel_assoc.attributes();
    let score_cols: Vec<usize> = attrs
        .iter()
        .map(|a| scores.attributes().require(a))
        .collect::<Result<_>>()?;
    let prior_vals: Vec<f64> = attrs
        .iter()
        .map(|a| prior.attributes.require(a).map(|i| prior.values[i]))
        .collect::<Result<_>>()?;

    let n = scores.instances().len();
    let n_cat = novel_assoc.categories().len();
    let assoc = novel_assoc.values();
    let mut out = Array2::<f64>::zeros((n, n_cat));
    for i in 0..n {
        let row = scores.table().row(i);
        for z in 0..n_cat {
            let mut s = 0.0;
            for (m, &col) in score_cols.iter().enumerate() {
                let p = row[col].clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
                let pm = prior_vals[m];
                s += if assoc[[z, m]] == 1.0 {
                    p.ln() - pm.ln()
                } else {
                    (1.0 - p).ln() - (1.0 - pm).ln()
                };
            }
            out[[i, z]] = s;
        }
    }
    CategoryScoreMatrix::new(
        Table::new(scores.instances().clone(), novel_assoc.categories().clone(), out)?,
        false,
    )
}

/// Transfers known-category scores to each novel category through its
/// `top_k` most related known categories, weighted by normalized relatedness.
///
/// `rel` has novel categories as rows and known categories as columns; ties
/// in relatedness keep column order.
pub fn direct_similarity_scores(
    known_scores: &CategoryScoreMatrix,
    rel: &RelatednessMatrix,
    top_k: usize,
) -> Result<CategoryScoreMatrix> {
    if top_k == 0 {
        return Err(Error::InvalidValue("top_k must be at least 1".into()));
    }
    let known_cols: Vec<usize> = rel
        .terms()
        .iter()
        .map(|c| known_scores.categories().require(c))
        .collect::<Result<_>>()?;
    let r = rel.values();
    let mut weights: Vec<Vec<(usize, f64)>> = Vec::with_capacity(r.nrows());
    for (z, name) in rel.categories().iter().enumerate() {
        let mut order: Vec<usize> = (0..r.ncols()).collect();
        order.sort_by(|&a, &b| r[[z, b]].total_cmp(&r[[z, a]]));
        order.truncate(top_k);
        let total: f64 = order.iter().map(|&j| r[[z, j]]).sum();
        if total <= 0.0 {
            return Err(Error::UnrelatableCategory(name.to_string()));
        }
        weights.push(order.iter().map(|&j| (known_cols[j], r[[z, j]] / total)).collect());
    }

    let ks = known_scores.values();
    let n = ks.nrows();
    let mut out = Array2::<f64>::zeros((n, weights.len()));
    for i in 0..n {
        for (z, w) in weights.iter().enumerate() {
            out[[i, z]] = w.iter().map(|&(col, wt)| wt * ks[[i, col]]).sum();
        }
    }
    CategoryScoreMatrix::new(
        Table::new(known_scores.instances().clone(), rel.categories().clone(), out)?,
        false,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyMode {
    /// Nearest known leaf by tree distance.
    Leaf,
    /// Mean over the known leaves under the closest ancestor that has any.
    Inner,
    /// Mean of the leaf and inner scores.
    All,
}

impl std::str::FromStr for HierarchyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaf" => Ok(HierarchyMode::Leaf),
            "inner" => Ok(HierarchyMode::Inner),
            "all" => Ok(HierarchyMode::All),
            other => Err(Error::parse("hierarchy mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Scores novel taxonomy leaves from known-category scores.
///
/// Known categories are the columns of `known_scores` that are taxonomy
/// nodes; columns absent from the taxonomy are ignored. Every novel
/// category must be a taxonomy node with a parent.
pub fn hierarchy_transfer(
    tax: &Taxonomy,
    known_scores: &CategoryScoreMatrix,
    novel: &[CategoryId],
    mode: HierarchyMode,
) -> Result<CategoryScoreMatrix> {
    // (score column, taxonomy node) of every known category in the tree
    let known: Vec<(usize, usize)> = known_scores
        .categories()
        .iter()
        .enumerate()
        .filter_map(|(col, name)| tax.nodes().index_of(name).map(|node| (col, node)))
        .collect();
    if known.is_empty() {
        return Err(Error::Taxonomy("no known categories among the taxonomy nodes".into()));
    }

    let mut plans: Vec<(usize, Vec<usize>)> = Vec::with_capacity(novel.len());
    for name in novel {
        let node = tax.nodes().require(name)?;
        let parent = tax
            .parent(node)
            .ok_or_else(|| Error::Taxonomy(format!("novel category `{name}` is the root")))?;
        let nearest = known
            .iter()
            .min_by_key(|&&(_, k)| tax.distance(node, k))
            .map(|&(col, _)| col)
            .expect("non-empty known set");
        let mut anc = Some(parent);
        let mut group = Vec::new();
        while let Some(a) = anc {
            group = known
                .iter()
                .filter(|&&(_, k)| k != node && tax.is_descendant(k, a))
                .map(|&(col, _)| col)
                .collect();
            if !group.is_empty() {
                break;
            }
            anc = tax.parent(a);
        }
        plans.push((nearest, group));
    }

    let ks = known_scores.values();
    let n = ks.nrows();
    let mut out = Array2::<f64>::zeros((n, novel.len()));
    for i in 0..n {
        for (z, (nearest, group)) in plans.iter().enumerate() {
            let leaf = ks[[i, *nearest]];
            let inner = group.iter().map(|&c| ks[[i, c]]).sum::<f64>() / group.len() as f64;
            out[[i, z]] = match mode {
                HierarchyMode::Leaf => leaf,
                HierarchyMode::Inner => inner,
                HierarchyMode::All => 0.5 * (leaf + inner),
            };
        }
    }
    CategoryScoreMatrix::new(
        Table::new(known_scores.instances().clone(), Registry::new(novel)?, out)?,
        false,
    )
}
