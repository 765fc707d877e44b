//! Goodness-of-fit tests for stochastic block models and their
//! degree-corrected variant, based on the largest standardised deviation
//! between a node's observed and fitted connections to a community.
//!
//! The crate covers graph I/O, model sampling and estimation, community
//! detection (adjacency spectral clustering and SCORE), the test statistics
//! and their Gumbel null, power analysis for fixed alternatives, and a
//! simulation harness.

pub mod detect;
pub mod eigen;
pub mod error;
pub mod gof;
pub mod graph;
pub mod harness;
pub mod kmeans;
pub mod power;

pub mod model;

pub use detect::{score, spectral_clustering, ClusteringConfig, Detector};
pub use error::{Error, Result};
pub use gof::{
    deviation_field_dcsbm, deviation_field_sbm, gumbel_cdf, gumbel_quantile, statistic_l,
    statistic_t, test_membership, test_membership_known_omega, test_num_communities,
    DeviationField, GumbelNull, ModelKind, StatisticVariant, TestReport,
};
pub use graph::{Graph, WeightedDigraph};
pub use model::{BlockMatrix, DegreeParams, Membership};
