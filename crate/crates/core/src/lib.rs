//! Mining pipeline that relates stale method comments to bug-introducing
//! commits in Java repositories.
//!
//! Stages: [`bugfix`] flags fixing commits, [`szz`] blames their removed
//! lines, [`records`] samples targets and pairs them with earlier commits,
//! [`classify`] judges comment consistency, [`stats`] computes odds ratios
//! and [`eval`] scores classifiers on labeled data. [`pipeline`] wires the
//! stages together through files.

pub mod bugfix;
pub mod classify;
pub mod config;
pub mod eval;
pub mod git;
pub mod pipeline;
pub mod records;
pub mod stats;
pub mod szz;

#[cfg(feature = "test-util")]
pub mod testutil;
