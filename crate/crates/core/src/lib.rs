//! Heterogeneous treatment effect estimation with distilled doubly robust
//! causal trees.
//!
//! The pipeline runs in five steps:
//!
//! 1. [`scores::crossfit_nuisances`] fits propensity and arm-wise outcome
//!    forests with K-fold cross-fitting.
//! 2. [`scores::dr_scores`] turns them into per-unit AIPW scores, whose mean
//!    is the average treatment effect ([`scores::dr_ate`]).
//! 3. [`forest::fit_causal_forest`] grows an honest causal forest and
//!    [`forest::predict_cate`] gives out-of-bag per-unit effects.
//! 4. [`ddrct::stability_select`] distils the forest into many depth-limited
//!    regression trees fit on random half-samples. It keeps the tree that
//!    best predicts the forest out of sample.
//! 5. Every node of the kept tree is estimated with held-out doubly robust
//!    scores and bootstrapped with the structure fixed.
//!
//! [`ddrct::run_ddrct_pipeline`] chains the steps; [`cli`] wraps them in a
//! configuration-driven runner that writes tables, DOT graphs and JSON.

pub mod cli;
pub mod data;
pub mod ddrct;
pub mod error;
pub mod forest;
pub mod rng;
pub mod scores;
pub mod synthetic;

pub use error::{Error, Result};
