//! Generalized Pareto regression trees.
//!
//! Excesses of a response above a high threshold are modelled by a GP law
//! whose scale and tail index depend on covariates through a CART-style
//! partition. The crate covers the GP likelihood and its box-constrained
//! maximization ([`gpd`]), growing the maximal tree ([`tree`]), weakest-link
//! pruning with penalty selection ([`prune`]), a Burr simulation harness
//! ([`sim`]) and file formats ([`io`]).

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod gpd;
pub mod io;
pub mod numfmt;
pub mod par;
pub mod prune;
pub mod sim;
pub mod tree;

pub use data::{pot_filter, quantile_threshold, Column, Dataset, Value};
pub use error::{GptError, Result};
pub use gpd::{gp_fit, FitConfig, GpParams};
pub use prune::{prune_path, select_lambda, select_subtree, PenaltyGrid, PruningPath, Selection};
pub use sim::{run_experiment, Gamma0, MseReport, SimDesign};
pub use tree::{grow, predict, GrowConfig, TreeNode};
