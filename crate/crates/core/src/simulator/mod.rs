//! Monte Carlo evaluation with synthetic annotators.
//!
//! Ground-truth scores are drawn uniformly on [1, 5]. Each simulated
//! annotator perceives an item as its score plus Gaussian noise, prefers the
//! larger perception, and inverts the vote with a fixed error rate. Runs are
//! scored by Kendall's tau-b, Pearson correlation and aligned RMSE against
//! the designed scores.

pub mod experiment;
pub mod metrics;
pub mod monte_carlo;
pub mod stats;
pub mod truth;

pub use experiment::{
    evaluation_axis, fpc_matrix, run_experiment, run_experiment_detailed, votes_for, ExperimentOptions,
    ExperimentOutcome, MetricTrajectory, Strategy,
};
pub use metrics::{
    affine_align, aligned_rmse, kendall_tau, plcc, rescale_fisher, rescale_neg_inv, rmse, saving_budget, FISHER_CLAMP,
};
pub use monte_carlo::{
    crossing_point, format_summary_table, paired_comparison, run_monte_carlo, write_summary_json,
    write_trajectories_csv, Metric, ReferenceLevel, RunRecord, SavingBudget, SimulationConfig, SimulationResult,
    SimulationSummary, StrategySummary, DEFAULT_EVAL_POINTS, FPC_REFERENCE_ROUNDS,
};
pub use stats::{mean_ci, paired_t_test, MeanCi, PairedTTest, Z_95};
pub use truth::{gen_ground_truth, simulate_vote, GroundTruth, RngStream, SCORE_RANGE, SIGMA_RANGE};
