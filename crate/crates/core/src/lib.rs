//! Active sampling for pairwise preference aggregation.
//!
//! Items are compared two at a time; [`bt`] fits Bradley-Terry log-merits
//! and their covariance to the accumulated win counts. [`info_gain`] turns
//! that Gaussian approximation into the expected information gain of every
//! candidate pair, and [`sampler`] picks either the single most informative
//! pair or, once one full round's worth of votes is in, a minimum spanning
//! tree over inverse gains that annotators can label in parallel.
//! [`simulator`] evaluates these policies against synthetic annotators, and
//! [`dataset`] reads and writes comparison counts as CSV.

pub mod bt;
pub mod dataset;
pub mod error;
pub mod info_gain;
pub mod quadrature;
pub mod sampler;
pub mod simulator;

pub use bt::{fit_bt, ComparisonMatrix, FitOptions, ScoreEstimate};
pub use error::{Error, Result};
pub use info_gain::{eig_pair, pair_prior, utility_graph, PairGaussian, UtilityGraph};
pub use quadrature::{gh_nodes_weights, Quadrature};
pub use sampler::{next_batch, select_gm, select_mst, Mode, PairBatch, SamplerState};
