//! Learners with randomized hypotheses for PAC learning under malicious, nasty,
//! nasty-classification and agnostic corruption, on explicit finite domains.
//!
//! The crate is organized bottom-up:
//! - [`domain`]: points, distributions, concepts, datasets, real-valued predictors.
//! - [`mixture`]: mixtures over majorities of concepts and their exact i.i.d. laws.
//! - [`erm`]: exact and sampled empirical-risk oracles.
//! - [`loss`]: corner losses, link functions, the progress measure.
//! - [`optimizer`]: the Frank–Wolfe loop.
//! - [`learners`]: malicious, agnostic and fixed-distribution learners plus baselines.
//! - [`adversaries`]: noise processes and lower-bound constructions.
//! - [`rounding`]: k-wise independent derandomization.
//! - [`fairness`]: multiaccuracy and calibration audits.
//! - [`harness`]: configuration, Monte Carlo runner, sample sizes, reports.
//! - [`verify`]: fast self-checks of the identities above.

// `!(x > 0.0)` style guards also reject NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversaries;
pub mod domain;
pub mod erm;
pub mod fairness;
pub mod harness;
pub mod io;
pub mod learners;
pub mod error;
pub mod loss;
pub mod mixture;
pub mod optimizer;
pub mod rng;
pub mod rounding;
pub mod verify;

pub use domain::{
    error_rate, rad_sample, Concept, ConceptClass, DatasetSummary, Example, Family, FiniteDomain, JointDistribution,
    Label, LabeledDataset, PointDistribution, RealPredictor,
};
pub use error::{Error, Result};
