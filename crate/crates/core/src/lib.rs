//! Join discovery and table augmentation over CSV data lakes.
//!
//! The pipeline has three stages. Retrieval finds lake columns whose values
//! cover the base table's key column ([`retrieval`]). Merge aggregates the
//! candidate tables to one row per key and left-joins them under a selector
//! policy ([`merge`]). Predict trains a model on the augmented table and
//! scores it ([`predict`]). [`evaluate`] wires the three together under
//! cross-validation with resource metering, and [`synth`] builds benchmark
//! lakes from knowledge-base triplets.

pub mod catalog;
pub mod error;
pub mod evaluate;
pub mod fixtures;
pub mod merge;
pub mod predict;
pub mod retrieval;
pub mod synth;
pub mod table;

pub use catalog::{CatalogSummary, LakeCatalog, TableProfile};
pub use error::{Error, Result};
pub use table::{Cell, Column, DType, Table};
