//! Audit toolkit for crowd-donated search-result lists.

pub mod bubble;
pub mod catalog;
pub mod cleanse;
pub mod dynamics;
pub mod error;
pub mod ingest;
pub mod model;
pub mod overlap;
pub mod reach;
pub mod run;
pub mod regional;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
