//! Bayesian additive regression trees with a fully retained posterior sample
//! of tree structures, plus the analytics and static-SVG visualizations for
//! exploring that posterior: variable importance and interaction with
//! uncertainty (VSUP heatmaps), icicle tree plots, proximity-based MDS
//! embeddings with confidence ellipses, convergence/fit diagnostics, and
//! model-agnostic comparators (permutation importance, Friedman's H).
//!
//! The crate is organized around a neutral line-delimited JSON tree dump
//! ([`dump`]): `fit` produces one, every analysis and plot can be recomputed
//! from it, and externally produced dumps in the same format are first-class
//! inputs.

pub mod agnostic;
pub mod analytics;
pub mod cli;
pub mod data;
pub mod dump;
pub mod embed;
pub mod error;
pub mod sampler;
pub mod stats;
pub mod tree;
pub mod viz;

pub use data::{ColumnKind, ColumnMeta, Dataset};
pub use error::{Error, Result};
pub use sampler::{FitReport, SamplerConfig};
pub use tree::{IterationDraw, MoveKind, PosteriorEnsemble, Proposal, Task, TreeDraw, TreeNode, TreeTypeKey};
