use std::collections::HashSet;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{AssociationMatrix, Measure, Registry, RelatednessMatrix, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Entrywise mean of min-max normalized matrices over a shared attribute list.
    ClassifierFusion,
    /// Each (measure, attribute) pair becomes its own attribute column.
    Expanded,
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier_fusion" => Ok(FusionMode::ClassifierFusion),
            "expanded" => Ok(FusionMode::Expanded),
            other => Err(Error::parse("fusion mode", format!("unknown mode `{other}`"))),
        }
    }
}

fn min_max(values: &Array2<f64>) -> Array2<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(values.raw_dim())
    }
}

fn same_set(a: &Registry, b: &Registry) -> bool {
    a.len() == b.len() && b.iter().all(|id| a.contains(id))
}

/// Combines several relatedness matrices over the same categories.
///
/// Every input is min-max normalized over all of its entries first (a
/// constant matrix normalizes to zeros). Rows and columns are aligned by
/// name to the first matrix.
pub fn fuse_measures(matrices: &[RelatednessMatrix], mode: FusionMode) -> Result<RelatednessMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidValue("no relatedness matrices to fuse".into()))?;
    let categories = first.categories().clone();
    for m in matrices {
        if !same_set(&categories, m.categories()) {
            return Err(Error::Dimension("mismatched category lists".into()));
        }
    }
    let aligned: Vec<Table> = matrices
        .iter()
        .map(|m| m.table().select_rows(categories.ids()))
        .collect::<Result<_>>()?;

    let table = match mode {
        FusionMode::ClassifierFusion => {
            let attrs = first.terms().clone();
            for m in matrices {
                if !same_set(&attrs, m.terms()) {
                    return Err(Error::Dimension(
                        "classifier fusion needs a shared attribute list".into(),
                    ));
                }
            }
            let mut sum = Array2::<f64>::zeros((categories.len(), attrs.len()));
            for t in &aligned {
                let t = t.select_cols(attrs.ids())?;
                sum += &min_max(&t.values().to_owned());
            }
            let n = matrices.len() as f64;
            Table::new(categories, attrs, sum.mapv(|v| v / n))?
        }
        FusionMode::Expanded => {
            let measures: HashSet<Measure> = matrices.iter().map(|m| m.measure()).collect();
            let unique = measures.len() == matrices.len();
            let mut cols = Registry::default();
            let mut blocks = Vec::new();
            for (i, (m, t)) in matrices.iter().zip(&aligned).enumerate() {
                let prefix = if unique {
                    m.measure().to_string()
                } else {
                    format!("{}#{i}", m.measure())
                };
                for attr in m.terms().iter() {
                    cols.push(&format!("{prefix}:{attr}"))?;
                }
                blocks.push(min_max(&t.values().to_owned()));
            }
            let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
            let values = ndarray::concatenate(ndarray::Axis(1), &views)
                .map_err(|e| Error::Dimension(e.to_string()))?;
            Table::new(categories, cols, values)?
        }
    };
    RelatednessMatrix::new(table, Measure::Fused)
}

/// Rule turning real-valued relatedness into binary associations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BinarizePolicy {
    /// The `k` most related categories of each attribute (ties by category order).
    PerAttributeTopK { k: usize },
    /// Entries `>= threshold`.
    GlobalThreshold { threshold: f64 },
    /// Entries strictly above their attribute column's mean.
    PerAttributeMean,
}

impl FromStr for BinarizePolicy {
    type Err = Error;

    /// Accepts `topk:K`, `threshold:T` and `mean`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse("binarize policy", format!("cannot parse `{s}`"));
        match s.split_once(':') {
            Some(("topk", k)) => Ok(BinarizePolicy::PerAttributeTopK {
                k: k.parse().map_err(|_| bad())?,
            }),
            Some(("threshold", t)) => Ok(BinarizePolicy::GlobalThreshold {
                threshold: t.parse().map_err(|_| bad())?,
            }),
            None if s == "mean" => Ok(BinarizePolicy::PerAttributeMean),
            _ => Err(bad()),
        }
    }
}

pub fn binarize(rel: &RelatednessMatrix, policy: BinarizePolicy) -> Result<AssociationMatrix> {
    let v = rel.values();
    let (n_cat, n_attr) = v.dim();
    let mut out = Array2::<f64>::zeros((n_cat, n_attr));
    match policy {
        BinarizePolicy::PerAttributeTopK { k } => {
            if k == 0 {
                return Err(Error::InvalidValue("top-k needs k >= 1".into()));
            }
            for m in 0..n_attr {
                let mut order: Vec<usize> = (0..n_cat).collect();
                // stable: equal values keep category order
                order.sort_by(|&a, &b| v[[b, m]].total_cmp(&v[[a, m]]));
                for &y in order.iter().take(k) {
                    out[[y, m]] = 1.0;
                }
            }
        }
        BinarizePolicy::GlobalThreshold { threshold } => {
            if !threshold.is_finite() {
                return Err(Error::InvalidValue("threshold must be finite".into()));
            }
            out = v.mapv(|x| if x >= threshold { 1.0 } else { 0.0 });
        }
        BinarizePolicy::PerAttributeMean => {
            for m in 0..n_attr {
                let col = v.column(m);
                let mean = col.sum() / n_cat as f64;
                for y in 0..n_cat {
                    out[[y, m]] = if col[y] > mean { 1.0 } else { 0.0 };
                }
            }
        }
    }
    AssociationMatrix::binary(Table::new(
        rel.categories().clone(),
        rel.terms().clone(),
        out,
    )?)
}
