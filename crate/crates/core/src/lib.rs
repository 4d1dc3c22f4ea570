//! Balanced subsampling for large datasets with categorical covariates.
//!
//! Simple random subsamples of categorical data are frequently singular: a
//! level that is never drawn makes the corresponding dummy column of the
//! ANOVA design matrix zero, and no amount of data at the other levels can
//! recover the lost parameter. This crate selects subsamples whose level and
//! level-pair frequencies are as close to uniform as possible, which keeps
//! the information matrix well conditioned, minimizes the generalized
//! variance of the least-squares estimate, and caps the worst-case
//! prediction error over the covariate domain.
//!
//! The pieces:
//!
//! - [`dataset`]: level-coded columnar datasets, CSV ingestion, synthetic
//!   generators, and response simulation.
//! - [`balance`]: the imbalance criterion `f`, computed both directly from
//!   level/pair counts and through a pairwise row-coincidence identity, plus
//!   an orthogonal-array test.
//! - [`selector`]: the sequential greedy selector with incremental score
//!   updates (O(N·p) per point), and the uniform-random baseline.
//! - [`anova`]: dummy and orthonormal-contrast coding, OLS fitting,
//!   determinant and leverage diagnostics.
//! - [`evaluate`]: a seeded simulation harness measuring nonsingularity,
//!   estimation error, and worst-case prediction error per method.
//!
//! With the default `parallel` feature the candidate scan and the
//! simulation repetitions run on rayon; results are bit-identical to the
//! sequential fallback (`--no-default-features`) because every reduction
//! used is exact-integer or order-independent.

pub mod anova;
pub mod balance;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod selector;

mod seed;

pub use error::{Error, Result};
