//! Shared domain types: identifier registries, labelled dense matrices and
//! dataset splits.
//!
//! Every matrix type wraps a [`Table`], a dense row-major `f64` matrix whose
//! rows and columns are named by [`Registry`] entries. The wrappers add the
//! value-range invariants of their role (probabilities, binary associations,
//! finite features, ...). All of them are immutable after construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symbolic name of a category (known `y` or novel `z`).
pub type CategoryId = String;
/// Symbolic name of an attribute.
pub type AttributeId = String;
/// Symbolic name of an instance (an image, a video, a feature row).
pub type InstanceId = String;

/// Ordered set of identifiers with a dense index per entry.
///
/// Identifiers are whitespace-trimmed and case-sensitive. Index assignment
/// follows insertion order.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Registry {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut reg = Registry::default();
        for id in ids {
            reg.push(id.as_ref())?;
        }
        Ok(reg)
    }

    /// Appends an identifier and returns its index.
    pub fn push(&mut self, id: &str) -> Result<usize> {
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::EmptyId);
        }
        if self.index.contains_key(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        let idx = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), idx);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id.trim()).copied()
    }

    /// Like [`Registry::index_of`] but reports unknown identifiers as errors.
    pub fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::UnknownId(id.trim().to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id.trim())
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        self.ids.iter().map(String::as_str)
    }
}

impl PartialEq for Registry {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

/// Dense matrix with named rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    rows: Registry,
    cols: Registry,
    values: Array2<f64>,
}

impl Table {
    /// Builds a table, rejecting shape mismatches and non-finite entries.
    pub fn new(rows: Registry, cols: Registry, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != rows.len() || values.ncols() != cols.len() {
            return Err(Error::Dimension(format!(
                "values are {}x{} but there are {} row and {} column ids",
                values.nrows(),
                values.ncols(),
                rows.len(),
                cols.len()
            )));
        }
        if let Some(((r, c), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite entry {v} at ({}, {})",
                rows.name(r),
                cols.name(c)
            )));
        }
        Ok(Table { rows, cols, values })
    }

    pub fn rows(&self) -> &Registry {
        &self.rows
    }

    pub fn cols(&self) -> &Registry {
        &self.cols
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.values.row(idx)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[[row, col]]
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_parts(self) -> (Registry, Registry, Array2<f64>) {
        (self.rows, self.cols, self.values)
    }

    /// Sub-table with the named rows, in the given order.
    pub fn select_rows<S: AsRef<str>>(&self, names: &[S]) -> Result<Table> {
        let idx = names
            .iter()
            .map(|n| self.rows.require(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let values = self.values.select(ndarray::Axis(0), &idx);
        Table::new(Registry::new(names)?, self.cols.clone(), values)
    }

    /// Sub-table with the named columns, in the given order.
    pub fn select_cols<S: AsRef<str>>(&self, names: &[S]) -> Result<Table> {
        let idx = names
            .iter()
            .map(|n| self.cols.require(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let values = self.values.select(ndarray::Axis(1), &idx);
        Table::new(self.rows.clone(), Registry::new(names)?, values)
    }

    fn check_range(&self, what: &str, lo: f64, hi: f64) -> Result<()> {
        match self.values.indexed_iter().find(|(_, &v)| v < lo || v > hi) {
            Some(((r, c), v)) => Err(Error::InvalidValue(format!(
                "{what} entry {v} at ({}, {}) outside [{lo}, {hi}]",
                self.rows.name(r),
                self.cols.name(c)
            ))),
            None => Ok(()),
        }
    }
}

macro_rules! table_accessors {
    () => {
        pub fn table(&self) -> &Table {
            &self.table
        }

        pub fn into_table(self) -> Table {
            self.table
        }

        pub fn values(&self) -> ArrayView2<'_, f64> {
            self.table.values()
        }

        pub fn get(&self, row: usize, col: usize) -> f64 {
            self.table.get(row, col)
        }
    };
}

/// Category x attribute associations `a^y_m`, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    table: Table,
    binary: bool,
}

impl AssociationMatrix {
    /// Soft (or binary) associations with entries in `[0, 1]`.
    pub fn new(table: Table) -> Result<Self> {
        table.check_range("association", 0.0, 1.0)?;
        let binary = table.values.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(AssociationMatrix { table, binary })
    }

    /// Strictly binary associations; any entry outside `{0, 1}` is an error.
    pub fn binary(table: Table) -> Result<Self> {
        let assoc = Self::new(table)?;
        if !assoc.binary {
            return Err(Error::InvalidValue(
                "binary association matrix has entries outside {0, 1}".into(),
            ));
        }
        Ok(assoc)
    }

    table_accessors!();

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn categories(&self) -> &Registry {
        self.table.rows()
    }

    pub fn attributes(&self) -> &Registry {
        self.table.cols()
    }

    /// Restriction to a subset of categories.
    pub fn select_categories<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        Self::new(self.table.select_rows(names)?)
    }

    /// Categories whose row is all zero. In binary mode such a category has
    /// no attribute signature; this is reported, not rejected.
    pub fn empty_categories(&self) -> Vec<CategoryId> {
        self.table
            .rows()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.table.row(*i).iter().all(|&v| v == 0.0))
            .map(|(_, name)| name.to_string())
            .collect()
    }
}

/// Instance x attribute probabilities `p(a_m | x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeScoreMatrix {
    table: Table,
}

impl AttributeScoreMatrix {
    pub fn new(table: Table) -> Result<Self> {
        table.check_range("attribute score", 0.0, 1.0)?;
        Ok(AttributeScoreMatrix { table })
    }

    table_accessors!();

    pub fn instances(&self) -> &Registry {
        self.table.rows()
    }

    pub fn attributes(&self) -> &Registry {
        self.table.cols()
    }
}

/// Instance feature vectors. Columns are named `f0`, `f1`, ...
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    table: Table,
}

impl FeatureMatrix {
    pub fn new(table: Table) -> Result<Self> {
        Ok(FeatureMatrix { table })
    }

    pub fn from_array(instances: Registry, values: Array2<f64>) -> Result<Self> {
        let cols = Registry::new((0..values.ncols()).map(|j| format!("f{j}")))?;
        Self::new(Table::new(instances, cols, values)?)
    }

    table_accessors!();

    pub fn instances(&self) -> &Registry {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }
}

/// Which relatedness measure produced a [`RelatednessMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    DiceHit,
    DiceSnippet,
    Lin,
    Esa,
    Tfidf,
    Fused,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::DiceHit => "dice_hit",
            Measure::DiceSnippet => "dice_snippet",
            Measure::Lin => "lin",
            Measure::Esa => "esa",
            Measure::Tfidf => "tfidf",
            Measure::Fused => "fused",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "dice_hit" => Measure::DiceHit,
            "dice_snippet" => Measure::DiceSnippet,
            "lin" => Measure::Lin,
            "esa" => Measure::Esa,
            "tfidf" => Measure::Tfidf,
            "fused" => Measure::Fused,
            other => return Err(Error::parse("measure", format!("unknown measure `{other}`"))),
        })
    }
}

/// Real-valued relatedness between row categories and column terms
/// (attributes, or known categories for direct-similarity transfer).
#[derive(Debug, Clone, PartialEq)]
pub struct RelatednessMatrix {
    table: Table,
    measure: Measure,
}

impl RelatednessMatrix {
    pub fn new(table: Table, measure: Measure) -> Result<Self> {
        table.check_range("relatedness", 0.0, f64::INFINITY)?;
        Ok(RelatednessMatrix { table, measure })
    }

    table_accessors!();

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn categories(&self) -> &Registry {
        self.table.rows()
    }

    pub fn terms(&self) -> &Registry {
        self.table.cols()
    }
}

/// Instance x category scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScoreMatrix {
    table: Table,
    normalized: bool,
}

impl CategoryScoreMatrix {
    /// `normalized` asserts that every row sums to one (checked to 1e-9).
    pub fn new(table: Table, normalized: bool) -> Result<Self> {
        if normalized {
            for (i, row) in table.values.rows().into_iter().enumerate() {
                let s: f64 = row.sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidValue(format!(
                        "row `{}` sums to {s}, expected 1",
                        table.rows.name(i)
                    )));
                }
            }
        }
        Ok(CategoryScoreMatrix { table, normalized })
    }

    table_accessors!();

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn instances(&self) -> &Registry {
        self.table.rows()
    }

    pub fn categories(&self) -> &Registry {
        self.table.cols()
    }

    /// Index of the best category per row; ties go to the earliest column.
    pub fn argmax(&self) -> Vec<usize> {
        self.values().rows().into_iter().map(argmax_first).collect()
    }
}

/// Index of the maximum entry, earliest index on ties. Empty input gives 0.
pub fn argmax_first(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Known/novel partition and instance assignments of an experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSplit {
    pub known_categories: BTreeSet<CategoryId>,
    pub novel_categories: BTreeSet<CategoryId>,
    pub train_instances: BTreeMap<InstanceId, CategoryId>,
    pub test_instances: BTreeMap<InstanceId, CategoryId>,
    #[serde(default)]
    pub fewshot_instances: BTreeMap<InstanceId, CategoryId>,
}

/// One broken [`DatasetSplit`] invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitViolation {
    KnownAndNovel(CategoryId),
    TrainLabelNotKnown { instance: InstanceId, category: CategoryId },
    FewshotLabelNotNovel { instance: InstanceId, category: CategoryId },
    FewshotInTest(InstanceId),
    TestLabelUnknown { instance: InstanceId, category: CategoryId },
    MissingAssociations(CategoryId),
}

impl fmt::Display for SplitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitViolation::KnownAndNovel(c) => write!(f, "category `{c}` is both known and novel"),
            SplitViolation::TrainLabelNotKnown { instance, category } => write!(
                f,
                "train instance `{instance}` labelled with non-known category `{category}`"
            ),
            SplitViolation::FewshotLabelNotNovel { instance, category } => write!(
                f,
                "few-shot instance `{instance}` labelled with non-novel category `{category}`"
            ),
            SplitViolation::FewshotInTest(i) => {
                write!(f, "few-shot instance `{i}` is also a test instance")
            }
            SplitViolation::TestLabelUnknown { instance, category } => write!(
                f,
                "test instance `{instance}` labelled with category `{category}` outside the split"
            ),
            SplitViolation::MissingAssociations(c) => {
                write!(f, "category `{c}` has no row in the association matrix")
            }
        }
    }
}

/// Lists every broken split invariant; empty means the split is consistent
/// with itself and with `assoc`.
pub fn validate_split(split: &DatasetSplit, assoc: &AssociationMatrix) -> Vec<SplitViolation> {
    let mut out = Vec::new();
    for c in split.known_categories.intersection(&split.novel_categories) {
        out.push(SplitViolation::KnownAndNovel(c.clone()));
    }
    for (i, c) in &split.train_instances {
        if !split.known_categories.contains(c) {
            out.push(SplitViolation::TrainLabelNotKnown {
                instance: i.clone(),
                category: c.clone(),
            });
        }
    }
    for (i, c) in &split.fewshot_instances {
        if !split.novel_categories.contains(c) {
            out.push(SplitViolation::FewshotLabelNotNovel {
                instance: i.clone(),
                category: c.clone(),
            });
        }
        if split.test_instances.contains_key(i) {
            out.push(SplitViolation::FewshotInTest(i.clone()));
        }
    }
    for (i, c) in &split.test_instances {
        if !split.known_categories.contains(c) && !split.novel_categories.contains(c) {
            out.push(SplitViolation::TestLabelUnknown {
                instance: i.clone(),
                category: c.clone(),
            });
        }
    }
    let all: BTreeSet<&CategoryId> = split
        .known_categories
        .iter()
        .chain(&split.novel_categories)
        .collect();
    for c in all {
        if !assoc.categories().contains(c) {
            out.push(SplitViolation::MissingAssociations(c.clone()));
        }
    }
    out
}
