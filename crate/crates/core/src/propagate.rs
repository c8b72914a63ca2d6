//! Propagated semantic transfer.
//!
//! Instances are connected in a symmetric k-NN graph built in attribute-score
//! space. Zero-shot predictions seed the label matrix `Y`, few-shot labels
//! clamp rows to one-hot vectors, and label propagation iterates
//! `F <- alpha S F + (1 - alpha) Y` with `S = D^{-1/2} W D^{-1/2}` until the
//! largest change falls below a tolerance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{argmax_first, CategoryId, CategoryScoreMatrix, InstanceId, Registry, Table};
use crate::error::{Error, Result};
use crate::io::format_number;

/// Edge weight function of the k-NN graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(-|u - v|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `max(0, cos(u, v))`
    Cosine,
}

/// Kernel as configured; a Gaussian without `sigma` uses the median
/// pairwise distance of the vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian {
        #[serde(default)]
        sigma: Option<f64>,
    },
    Cosine,
}

impl KernelConfig {
    pub fn resolve(&self, vectors: ArrayView2<'_, f64>) -> Kernel {
        match *self {
            KernelConfig::Gaussian { sigma: Some(sigma) } => Kernel::Gaussian { sigma },
            KernelConfig::Gaussian { sigma: None } => Kernel::Gaussian {
                sigma: median_pairwise_distance(vectors, 1000),
            },
            KernelConfig::Cosine => Kernel::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub k: usize,
    pub kernel: KernelConfig,
    pub alpha: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of instances seeded per category from zero-shot scores.
    pub rho: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            k: 10,
            kernel: KernelConfig::Gaussian { sigma: None },
            alpha: 0.8,
            tol: 1e-6,
            max_iters: 1000,
            rho: 0.05,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("propagation alpha must lie in [0, 1), got {}", self.alpha));
        }
        if self.k == 0 {
            return bad("propagation k must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("propagation tol must be positive, got {}", self.tol));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("propagation rho must lie in (0, 1], got {}", self.rho));
        }
        if let KernelConfig::Gaussian { sigma: Some(s) } = self.kernel {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("gaussian sigma must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

/// Median Euclidean distance over all pairs of an evenly strided sample of
/// at most `max_rows` rows. Falls back to 1 when the median is zero.
pub fn median_pairwise_distance(vectors: ArrayView2<'_, f64>, max_rows: usize) -> f64 {
    let n = vectors.nrows();
    let stride = n.div_ceil(max_rows.max(1)).max(1);
    let rows: Vec<usize> = (0..n).step_by(stride).collect();
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            dists.push(squared_distance(vectors.row(i), vectors.row(j)).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn similarity(kernel: Kernel, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match kernel {
        Kernel::Gaussian { sigma } => (-squared_distance(a, b) / (2.0 * sigma * sigma)).exp(),
        Kernel::Cosine => {
            let dot = a.dot(&b);
            let na = a.dot(&a).sqrt();
            let nb = b.dot(&b).sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (dot / (na * nb)).max(0.0)
            }
        }
    }
}

/// Sparse symmetric instance graph in CSR layout, with the symmetric
/// normalization `S = D^{-1/2} W D^{-1/2}` stored alongside `W`.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    instances: Registry,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    normalized: Vec<f64>,
}

impl SimilarityGraph {
    /// Builds a graph from undirected weighted edges; duplicates keep the
    /// largest weight and non-positive weights are dropped.
    pub fn from_edges(instances: Registry, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = instances.len();
        if n < 2 {
            return Err(Error::InvalidValue(format!("graph needs at least 2 nodes, got {n}")));
        }
        let mut directed: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len() * 2);
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if i != j && w > 0.0 {
                directed.push((i, j, w));
                directed.push((j, i, w));
            }
        }
        directed.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, w) in directed {
            if last == Some((i, j)) {
                let lw = weights.last_mut().expect("previous edge");
                *lw = lw.max(w);
                continue;
            }
            last = Some((i, j));
            cols.push(j);
            weights.push(w);
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let isolated: Vec<String> = (0..n)
            .filter(|&i| row_ptr[i] == row_ptr[i + 1])
            .map(|i| instances.name(i).to_string())
            .collect();
        if !isolated.is_empty() {
            return Err(Error::IsolatedNodes(isolated));
        }
        let degree: Vec<f64> = (0..n)
            .map(|i| weights[row_ptr[i]..row_ptr[i + 1]].iter().sum())
            .collect();
        let mut normalized = vec![0.0; weights.len()];
        for i in 0..n {
            for e in row_ptr[i]..row_ptr[i + 1] {
                normalized[e] = weights[e] / (degree[i] * degree[cols[e]]).sqrt();
            }
        }
        Ok(SimilarityGraph {
            instances,
            row_ptr,
            cols,
            weights,
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &Registry {
        &self.instances
    }

    pub fn edge_count(&self) -> usize {
        self.cols.len() / 2
    }

    /// `(neighbor, W_ij)` pairs of node `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    /// `(neighbor, S_ij)` pairs of node `i`.
    pub fn normalized_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.normalized[r].iter().copied())
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.neighbors(i).find(|&(c, _)| c == j).map_or(0.0, |(_, w)| w)
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors(i).map(|(_, w)| w).sum()
    }

    pub fn dense_normalized(&self) -> Array2<f64> {
        let n = self.len();
        let mut s = Array2::zeros((n, n));
        for i in 0..n {
            for (j, v) in self.normalized_neighbors(i) {
                s[[i, j]] = v;
            }
        }
        s
    }

    /// Power-iteration estimate of the spectral radius of `S`.
    pub fn spectral_radius_estimate(&self, iters: usize) -> f64 {
        let n = self.len();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..iters {
            let mut next = vec![0.0; n];
            for (i, out) in next.iter_mut().enumerate() {
                *out = self.normalized_neighbors(i).map(|(j, s)| s * v[j]).sum();
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = next.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }

    /// Undirected edges as `source<TAB>target<TAB>weight`, each once.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            for (j, w) in self.neighbors(i).filter(|&(j, _)| j > i) {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}",
                    self.instances.name(i),
                    self.instances.name(j),
                    format_number(w)
                );
            }
        }
        out
    }
}

/// Directed k-NN by kernel similarity (ties to the lower index), symmetrized
/// with `W = max(W_knn, W_knn^T)`.
pub fn build_knn_graph(vectors: &Table, k: usize, kernel: Kernel) -> Result<SimilarityGraph> {
    let n = vectors.nrows();
    if n < 2 {
        return Err(Error::InvalidValue(format!("graph needs at least 2 nodes, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidValue(format!("k must lie in [1, {}), got {k}", n)));
    }
    let v = vectors.values();
    let edges: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (similarity(kernel, v.row(i), v.row(j)), j))
                .collect();
            cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(move |(w, j)| (i, j, w))
        })
        .collect();
    SimilarityGraph::from_edges(vectors.rows().clone(), &edges)
}

/// Seed label matrix and the set of clamped rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedLabels {
    instances: Registry,
    categories: Registry,
    y: Array2<f64>,
    clamped: Vec<bool>,
}

impl SeedLabels {
    pub fn new(instances: Registry, categories: Registry, y: Array2<f64>) -> Result<Self> {
        if y.dim() != (instances.len(), categories.len()) {
            return Err(Error::Dimension("seed matrix shape".into()));
        }
        if y.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidValue("seed weights must be finite and non-negative".into()));
        }
        let n = instances.len();
        Ok(SeedLabels {
            instances,
            categories,
            y,
            clamped: vec![false; n],
        })
    }

    pub fn instances(&self) -> &Registry {
        &self.instances
    }

    pub fn categories(&self) -> &Registry {
        &self.categories
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn is_clamped(&self, i: usize) -> bool {
        self.clamped[i]
    }

    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// Per category, the top `ceil(rho n)` instances by zero-shot score get their
/// column-wise min-max normalized score as seed weight; all else is zero.
/// Ties keep instance order; a constant column seeds nothing.
pub fn seed_from_zeroshot(zs: &CategoryScoreMatrix, rho: f64) -> Result<SeedLabels> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidValue(format!("rho must lie in (0, 1], got {rho}")));
    }
    let v = zs.values();
    let (n, c) = v.dim();
    // guard against 0.3 * 10 = 3.0000000000000004
    let count = ((rho * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1));
    let mut y = Array2::<f64>::zeros((n, c));
    for z in 0..c {
        let col = v.column(z);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            continue;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[b].total_cmp(&col[a]));
        for &i in order.iter().take(count) {
            y[[i, z]] = (col[i] - lo) / (hi - lo);
        }
    }
    SeedLabels::new(zs.instances().clone(), zs.categories().clone(), y)
}

/// Replaces each labelled instance's row with a one-hot vector at its
/// category and marks it clamped.
pub fn clamp_fewshot(
    mut seeds: SeedLabels,
    labels: &BTreeMap<InstanceId, CategoryId>,
) -> Result<SeedLabels> {
    for (inst, cat) in labels {
        let i = seeds.instances.require(inst)?;
        let c = seeds.categories.require(cat)?;
        seeds.y.row_mut(i).fill(0.0);
        seeds.y[[i, c]] = 1.0;
        seeds.clamped[i] = true;
    }
    Ok(seeds)
}

/// Result of [`propagate`].
#[derive(Debug, Clone)]
pub struct Propagation {
    pub scores: CategoryScoreMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute change of the last sweep.
    pub last_change: f64,
}

/// Iterates `F <- alpha S F + (1 - alpha) Y` from `F = Y`, resetting clamped
/// rows to `Y` after every sweep, until the max-abs change is below `tol` or
/// `max_iters` sweeps ran.
pub fn propagate(
    graph: &SimilarityGraph,
    seeds: &SeedLabels,
    cfg: &PropagationConfig,
) -> Result<Propagation> {
    if !(0.0..1.0).contains(&cfg.alpha) {
        return Err(Error::InvalidConfig(format!(
            "propagation alpha must lie in [0, 1), got {}",
            cfg.alpha
        )));
    }
    if graph.instances() != seeds.instances() {
        return Err(Error::Dimension("graph and seeds cover different instances".into()));
    }
    let alpha = cfg.alpha;
    let y = &seeds.y;
    let (n, c) = y.dim();
    let mut f = y.clone();
    let mut next = Array2::<f64>::zeros((n, c));
    let mut iterations = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    while iterations < cfg.max_iters {
        for i in 0..n {
            if seeds.clamped[i] {
                next.row_mut(i).assign(&y.row(i));
                continue;
            }
            for z in 0..c {
                let sf: f64 = graph.normalized_neighbors(i).map(|(j, s)| s * f[[j, z]]).sum();
                next[[i, z]] = alpha * sf + (1.0 - alpha) * y[[i, z]];
            }
        }
        last_change = next
            .iter()
            .zip(f.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut f, &mut next);
        iterations += 1;
        if last_change < cfg.tol {
            converged = true;
            break;
        }
    }
    let scores = CategoryScoreMatrix::new(
        Table::new(seeds.instances.clone(), seeds.categories.clone(), f)?,
        false,
    )?;
    Ok(Propagation {
        scores,
        iterations,
        converged,
        last_change,
    })
}

/// `F = (1 - alpha) (I - alpha S)^{-1} Y` by a dense LU solve. Only valid
/// without clamped rows.
pub fn propagate_closed_form(
    graph: &SimilarityGraph,
    seeds: &SeedLabels,
    alpha: f64,
) -> Result<Array2<f64>> {
    if seeds.clamped.iter().any(|&c| c) {
        return Err(Error::ClampedClosedForm);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    if graph.instances() != seeds.instances() {
        return Err(Error::Dimension("graph and seeds cover different instances".into()));
    }
    let n = graph.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for (j, s) in graph.normalized_neighbors(i) {
            a[(i, j)] -= alpha * s;
        }
    }
    let (_, c) = seeds.y.dim();
    let b = DMatrix::from_fn(n, c, |i, z| seeds.y[[i, z]]);
    let x = a.lu().solve(&b).ok_or(Error::Singular)?;
    Ok(Array2::from_shape_fn((n, c), |(i, z)| (1.0 - alpha) * x[(i, z)]))
}

/// Output of [`pst`].
#[derive(Debug, Clone)]
pub struct PstResult {
    /// Propagated scores `F`, rows in the zero-shot score order.
    pub scores: CategoryScoreMatrix,
    /// Arg-max category per row (first category on ties).
    pub predictions: Vec<CategoryId>,
    pub iterations: usize,
    pub converged: bool,
    pub graph: SimilarityGraph,
}

/// Propagated semantic transfer: k-NN graph on `vectors`, seeds from `zs`,
/// few-shot clamping, label propagation and per-instance arg-max.
///
/// `vectors` rows are matched to `zs` rows by instance id.
pub fn pst(
    zs: &CategoryScoreMatrix,
    vectors: &Table,
    fewshot: &BTreeMap<InstanceId, CategoryId>,
    cfg: &PropagationConfig,
) -> Result<PstResult> {
    cfg.validate()?;
    let vectors = vectors.select_rows(zs.instances().ids())?;
    let kernel = cfg.kernel.resolve(vectors.values());
    let graph = build_knn_graph(&vectors, cfg.k.min(vectors.nrows().saturating_sub(1)).max(1), kernel)?;
    let seeds = clamp_fewshot(seed_from_zeroshot(zs, cfg.rho)?, fewshot)?;
    let prop = propagate(&graph, &seeds, cfg)?;
    let predictions = prop
        .scores
        .values()
        .rows()
        .into_iter()
        .map(|r| zs.categories().name(argmax_first(r)).to_string())
        .collect();
    Ok(PstResult {
        scores: prop.scores,
        predictions,
        iterations: prop.iterations,
        converged: prop.converged,
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn table(values: Array2<f64>) -> Table {
        let rows = Registry::new((0..values.nrows()).map(|i| format!("x{i}"))).unwrap();
        let cols = Registry::new((0..values.ncols()).map(|j| format!("c{j}"))).unwrap();
        Table::new(rows, cols, values).unwrap()
    }

    fn zs(values: Array2<f64>) -> CategoryScoreMatrix {
        CategoryScoreMatrix::new(table(values), false).unwrap()
    }

    #[test]
    fn knn_line_hand_case() {
        let g = build_knn_graph(&table(array![[0.0], [1.0], [10.0]]), 1, Kernel::Gaussian { sigma: 1.0 })
            .unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.weight(0, 1), (-0.5f64).exp());
        assert_eq!(g.weight(1, 0), (-0.5f64).exp());
        assert_eq!(g.weight(1, 2), (-40.5f64).exp());
        assert_eq!(g.weight(2, 1), (-40.5f64).exp());
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(g.to_tsv().lines().count(), 2);
    }

    #[test]
    fn complete_graph_and_identical_points() {
        let g = build_knn_graph(
            &table(array![[0.0, 1.0], [0.0, 1.0], [3.0, 0.0], [1.0, 1.0]]),
            3,
            Kernel::Gaussian { sigma: 1.0 },
        )
        .unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.weight(i, j) > 0.0, i != j);
            }
        }
        assert_eq!(g.weight(0, 1), 1.0);
        let rho = g.spectral_radius_estimate(200);
        assert!(rho <= 1.0 + 1e-9, "{rho}");
    }

    #[test]
    fn graph_errors() {
        assert!(build_knn_graph(&table(array![[0.0]]), 1, Kernel::Cosine).is_err());
        assert!(build_knn_graph(&table(array![[0.0], [1.0]]), 2, Kernel::Cosine).is_err());
        let err = build_knn_graph(&table(array![[1.0, 0.0], [0.0, 1.0]]), 1, Kernel::Cosine).unwrap_err();
        match err {
            Error::IsolatedNodes(ids) => assert_eq!(ids, vec!["x0".to_string(), "x1".to_string()]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn seeding_hand_case() {
        let s = seed_from_zeroshot(&zs(array![[0.1], [0.9], [0.5], [0.3]]), 0.5).unwrap();
        assert_eq!(s.values().column(0).to_vec(), vec![0.0, 1.0, 0.5, 0.0]);

        let one = seed_from_zeroshot(&zs(array![[0.1, 3.0], [0.9, 2.0], [0.5, 1.0]]), 0.01).unwrap();
        for col in one.values().columns() {
            assert_eq!(col.iter().filter(|&&v| v > 0.0).count(), 1);
        }

        let full = seed_from_zeroshot(&zs(array![[-2.0], [0.0], [2.0]]), 1.0).unwrap();
        assert_eq!(full.values().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert!(seed_from_zeroshot(&zs(array![[0.0]]), 0.0).is_err());
    }

    #[test]
    fn seeding_count_is_robust_to_rounding() {
        let col = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let s = seed_from_zeroshot(&zs(col), 0.3).unwrap();
        // top 3 are 9, 8, 7
        assert_eq!(s.values().iter().filter(|&&v| v > 0.0).count(), 3);
    }

    #[test]
    fn clamping_rules() {
        let seeds = seed_from_zeroshot(&zs(array![[0.2, 0.9], [0.8, 0.1], [0.5, 0.5]]), 1.0).unwrap();
        let same = clamp_fewshot(seeds.clone(), &BTreeMap::new()).unwrap();
        assert_eq!(same, seeds);

        let labels: BTreeMap<_, _> = [("x0".to_string(), "c0".to_string())].into_iter().collect();
        let c = clamp_fewshot(seeds.clone(), &labels).unwrap();
        assert_eq!(c.clamped_count(), 1);
        assert!(c.is_clamped(0));
        assert_eq!(c.values().row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(c.values().row(1), seeds.values().row(1));

        let bad: BTreeMap<_, _> = [("x0".to_string(), "zz".to_string())].into_iter().collect();
        assert!(clamp_fewshot(seeds.clone(), &bad).is_err());
        let bad: BTreeMap<_, _> = [("nope".to_string(), "c0".to_string())].into_iter().collect();
        assert!(clamp_fewshot(seeds, &bad).is_err());
    }

    fn two_node() -> SimilarityGraph {
        SimilarityGraph::from_edges(Registry::new(["x0", "x1"]).unwrap(), &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn two_node_linear_solve() {
        let seeds = SeedLabels::new(
            Registry::new(["x0", "x1"]).unwrap(),
            Registry::new(["c"]).unwrap(),
            array![[1.0], [0.0]],
        )
        .unwrap();
        let cfg = PropagationConfig { alpha: 0.5, tol: 1e-14, ..Default::default() };
        let it = propagate(&two_node(), &seeds, &cfg).unwrap();
        assert!(it.converged);
        assert!((it.scores.get(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((it.scores.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        let cf = propagate_closed_form(&two_node(), &seeds, 0.5).unwrap();
        assert!((cf[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
        assert!((cf[[1, 0]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_and_zero_seeds() {
        let y = array![[0.3, 0.0], [0.0, 0.7]];
        let seeds = SeedLabels::new(
            Registry::new(["x0", "x1"]).unwrap(),
            Registry::new(["a", "b"]).unwrap(),
            y.clone(),
        )
        .unwrap();
        let cfg = PropagationConfig { alpha: 0.0, ..Default::default() };
        let p = propagate(&two_node(), &seeds, &cfg).unwrap();
        assert_eq!(p.iterations, 1);
        assert_eq!(p.scores.values(), y.view());
        assert_eq!(propagate_closed_form(&two_node(), &seeds, 0.0).unwrap(), y);

        let zero = SeedLabels::new(
            Registry::new(["x0", "x1"]).unwrap(),
            Registry::new(["a"]).unwrap(),
            Array2::zeros((2, 1)),
        )
        .unwrap();
        let p = propagate(&two_node(), &zero, &PropagationConfig::default()).unwrap();
        assert!(p.scores.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_form_rejects_clamps_and_nonconvergence_is_flagged() {
        let seeds = seed_from_zeroshot(&zs(array![[0.2], [0.8]]), 1.0).unwrap();
        let labels: BTreeMap<_, _> = [("x1".to_string(), "c0".to_string())].into_iter().collect();
        let clamped = clamp_fewshot(seeds.clone(), &labels).unwrap();
        assert!(matches!(
            propagate_closed_form(&two_node(), &clamped, 0.5),
            Err(Error::ClampedClosedForm)
        ));
        let cfg = PropagationConfig { alpha: 0.99, tol: 1e-15, max_iters: 3, ..Default::default() };
        let p = propagate(&two_node(), &seeds, &cfg).unwrap();
        assert!(!p.converged);
        assert_eq!(p.iterations, 3);
        let bad = PropagationConfig { alpha: 1.0, ..Default::default() };
        assert!(propagate(&two_node(), &seeds, &bad).is_err());
    }

    #[test]
    fn pst_degenerate_settings() {
        let vectors = table(array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]);
        let scores = zs(array![[0.9, 0.1], [0.2, 0.3], [0.4, 0.6], [0.7, 0.8]]);
        let cfg = PropagationConfig { k: 1, alpha: 0.0, rho: 1.0, ..Default::default() };
        let r = pst(&scores, &vectors, &BTreeMap::new(), &cfg).unwrap();
        let seeds = seed_from_zeroshot(&scores, 1.0).unwrap();
        let expected: Vec<String> = seeds
            .values()
            .rows()
            .into_iter()
            .map(|row| format!("c{}", argmax_first(row)))
            .collect();
        assert_eq!(r.predictions, expected);

        let all: BTreeMap<_, _> = [("x0", "c1"), ("x1", "c0"), ("x2", "c0"), ("x3", "c1")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let cfg = PropagationConfig { k: 1, ..Default::default() };
        let r = pst(&scores, &vectors, &all, &cfg).unwrap();
        assert_eq!(r.predictions, vec!["c1", "c0", "c0", "c1"]);
    }

    #[test]
    fn config_validation() {
        assert!(PropagationConfig::default().validate().is_ok());
        for bad in [
            PropagationConfig { alpha: 1.0, ..Default::default() },
            PropagationConfig { k: 0, ..Default::default() },
            PropagationConfig { tol: 0.0, ..Default::default() },
            PropagationConfig { rho: 0.0, ..Default::default() },
            PropagationConfig { kernel: KernelConfig::Gaussian { sigma: Some(-1.0) }, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
        let parsed: PropagationConfig =
            serde_json::from_str(r#"{"k": 5, "kernel": {"type": "cosine"}}"#).unwrap();
        assert_eq!(parsed.k, 5);
        assert_eq!(parsed.kernel, KernelConfig::Cosine);
        assert!(serde_json::from_str::<PropagationConfig>(r#"{"kk": 5}"#).is_err());
    }

    #[test]
    fn median_distance() {
        let v = array![[0.0], [1.0], [3.0]];
        // distances 1, 3, 2
        assert_eq!(median_pairwise_distance(v.view(), 1000), 2.0);
        assert_eq!(median_pairwise_distance(array![[1.0], [1.0]].view(), 1000), 1.0);
    }
}
