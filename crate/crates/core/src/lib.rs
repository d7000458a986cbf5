//! Knowledge-graph neural recommendation with label-smoothness
//! regularization.
//!
//! A user's interest in each relation type reweights the knowledge graph;
//! a graph neural network aggregates entity features over that weighted
//! graph to score items, and a leave-one-out label-propagation loss
//! regularizes the learned edge weights.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gnn;
pub mod gradcheck;
pub mod ids;
pub mod interactions;
pub mod kg;
pub mod label_smoothness;
pub mod scoring;
pub mod sparse;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use ids::{EntityId, ItemId, RelationId, UserId};
