//! Skew-aware planning and simulation of multiway joins for
//! MapReduce-style shared-nothing execution.
//!
//! The pipeline: detect heavy-hitter values per join attribute, split
//! the join into residual joins (one per combination of attribute
//! types), derive each residual's communication-cost expression, solve
//! for communication-optimal attribute shares under a global reducer
//! budget, then validate the plan by simulating the shuffle and joining
//! inside each reducer, cross-checked against brute-force oracles.

pub mod compare;
pub mod cost;
pub mod data;
pub mod datagen;
pub mod decompose;
pub mod error;
pub mod hh;
pub mod optimize;
pub mod oracle;
pub mod plan;
pub mod query;
pub mod report;
pub mod simulate;

pub use error::{Error, Result};
pub use query::{Attribute, JoinQuery, RelationSchema};
