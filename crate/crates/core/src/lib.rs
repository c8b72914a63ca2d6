//! Zero- and few-shot recognition of novel categories through attributes.
//!
//! The crate covers the whole chain:
//!
//! * [`relatedness`]: mine category-attribute associations from local text
//!   corpora (Dice over documents or token windows, ESA, tf*idf over script
//!   documents) and from taxonomies (Lin), fuse and binarize them;
//! * [`classify`]: train per-attribute logistic classifiers on known
//!   categories and score instances;
//! * [`transfer`]: zero-shot category scores via direct attribute
//!   prediction, direct similarity to known categories, or the taxonomy;
//! * [`propagate`]: propagated semantic transfer, i.e. label propagation on an
//!   attribute-space k-NN graph seeded by zero-shot scores and few-shot labels;
//! * [`eval`]: ROC-AUC, accuracy and mean average precision protocols;
//! * [`synth`]: deterministic synthetic datasets and corpora.

pub mod classify;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod propagate;
pub mod relatedness;
pub mod synth;
pub mod transfer;

pub use data::{
    validate_split, AssociationMatrix, AttributeId, AttributeScoreMatrix, CategoryId,
    CategoryScoreMatrix, DatasetSplit, FeatureMatrix, InstanceId, Measure, Registry,
    RelatednessMatrix, SplitViolation, Table,
};
pub use error::{Error, Result};
