//! Category-attribute semantic relatedness mined from local corpora and
//! taxonomies, plus fusion and binarization into association matrices.

mod corpus;
mod fusion;
mod taxonomy;
mod tfidf;

pub use corpus::{dice_hitcount, dice_snippet, esa_relatedness, tokenize, CorpusIndex, Window};
pub use fusion::{binarize, fuse_measures, BinarizePolicy, FusionMode};
pub use taxonomy::{lin_relatedness, Taxonomy};
pub use tfidf::{group_scripts, tfidf_associations};

use ndarray::Array2;

use crate::data::{Measure, Registry, RelatednessMatrix, Table};
use crate::error::Result;

/// A pairwise relatedness source.
#[derive(Debug, Clone, Copy)]
pub enum Miner<'a> {
    DiceHit(&'a CorpusIndex),
    DiceSnippet(&'a CorpusIndex, Window),
    Lin(&'a Taxonomy),
    Esa(&'a CorpusIndex),
}

impl Miner<'_> {
    pub fn measure(&self) -> Measure {
        match self {
            Miner::DiceHit(_) => Measure::DiceHit,
            Miner::DiceSnippet(..) => Measure::DiceSnippet,
            Miner::Lin(_) => Measure::Lin,
            Miner::Esa(_) => Measure::Esa,
        }
    }

    pub fn relatedness(&self, a: &str, b: &str) -> Result<f64> {
        match *self {
            Miner::DiceHit(idx) => Ok(dice_hitcount(idx, a, b)),
            Miner::DiceSnippet(idx, w) => dice_snippet(idx, w, a, b),
            Miner::Lin(tax) => lin_relatedness(tax, a, b),
            Miner::Esa(idx) => Ok(esa_relatedness(idx, a, b)),
        }
    }

    /// Relatedness of every row term against every column term.
    pub fn matrix<S: AsRef<str>>(&self, rows: &[S], cols: &[S]) -> Result<RelatednessMatrix> {
        let row_reg = Registry::new(rows)?;
        let col_reg = Registry::new(cols)?;
        let mut values = Array2::zeros((row_reg.len(), col_reg.len()));
        for (i, r) in row_reg.iter().enumerate() {
            for (j, c) in col_reg.iter().enumerate() {
                values[[i, j]] = self.relatedness(r, c)?;
            }
        }
        RelatednessMatrix::new(Table::new(row_reg, col_reg, values)?, self.measure())
    }
}
