//! Log-return statistics of foreign-exchange assets in any numeraire.
//!
//! The crate computes log returns under an arbitrary numeraire, moves means,
//! covariances and correlations between numeraires analytically, derives
//! numeraire-invariant partial correlations from the precision matrix, and
//! runs the empirical pipeline on top: exclusion rules, transform validation,
//! threshold clusters, most-similar assets and Bonferroni-filtered
//! partial-correlation networks.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod export;
pub mod ingest;
pub mod linalg;
pub mod numeraire;
pub mod partial;
pub mod pipeline;
pub mod portfolio;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use exec::Exec;
pub use ingest::{
    align_and_fill, apply_exclusions, parse_price_panel, AlignedPanel, ExclusionRules, PricePanel,
    RemovalReport,
};
pub use numeraire::{
    correlation_from_covariance, correlation_transform, covariance_transform, log_returns,
    mean_transform, mean_vector, rebase_returns, sample_correlation, sample_covariance,
    variance_transform, CorrMatrix, CovMatrix, MeanVector, ReturnPanel,
};
pub use partial::{
    assemble_full_partial_matrix, invariance_report, partial_correlations, precision_matrix,
    PartialCorrMatrix, PrecisionMatrix, PrecisionOptions,
};
pub use portfolio::Portfolio;
