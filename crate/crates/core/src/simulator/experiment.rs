//! One budgeted sampling run against a synthetic ground truth.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{aligned_rmse, kendall_tau, plcc};
use super::truth::{simulate_vote, GroundTruth, RngStream};
use crate::bt::{fit_bt, ComparisonMatrix, FitOptions, ScoreEstimate, DEFAULT_PRIOR_COUNT};
use crate::error::{Error, Result};
use crate::info_gain::utility_graph;
use crate::quadrature::Quadrature;
use crate::sampler::{next_batch, select_gm, select_mst, standard_trial, SamplerState};

/// Pair-selection policy driven by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Single best pair up to one standard trial, spanning-tree batches after.
    HybridMst,
    GmOnly,
    MstOnly,
    /// One uniformly random pair per vote.
    Random,
    /// Full pair comparison: repeated rounds over every pair in shuffled order.
    Fpc,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::HybridMst,
        Strategy::GmOnly,
        Strategy::MstOnly,
        Strategy::Random,
        Strategy::Fpc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::HybridMst => "hybrid-mst",
            Strategy::GmOnly => "gm-only",
            Strategy::MstOnly => "mst-only",
            Strategy::Random => "random",
            Strategy::Fpc => "fpc",
        }
    }

    /// Random stream reserved for this strategy's votes. Stream 0 draws the
    /// ground truth, so strategies sharing a seed see the same items but
    /// independent annotators.
    pub fn stream_id(self) -> u64 {
        match self {
            Strategy::HybridMst => 1,
            Strategy::GmOnly => 2,
            Strategy::MstOnly => 3,
            Strategy::Random => 4,
            Strategy::Fpc => 5,
        }
    }

    fn is_active(self) -> bool {
        matches!(self, Strategy::HybridMst | Strategy::GmOnly | Strategy::MstOnly)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown strategy {s:?} (expected one of hybrid-mst, gm-only, mst-only, random, fpc)"
            ))
        })
    }
}

/// Metrics of one run, one entry per evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrajectory {
    /// Evaluation points in standard trial numbers.
    pub budget_axis: Vec<f64>,
    /// Observed votes at each evaluation point.
    pub comparisons: Vec<u64>,
    pub kendall: Vec<f64>,
    pub plcc: Vec<f64>,
    /// RMSE after affine alignment to the designed scores.
    pub rmse: Vec<f64>,
    pub repetitions: usize,
}

/// Sorted evaluation axis: the points in `(0, budget]`, plus `budget` itself.
pub fn evaluation_axis(budget: f64, eval_points: &[f64]) -> Result<Vec<f64>> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::invalid(format!("budget must be positive, got {budget}")));
    }
    if let Some(bad) = eval_points.iter().find(|e| !e.is_finite() || **e <= 0.0) {
        return Err(Error::invalid(format!("evaluation points must be positive, got {bad}")));
    }
    let mut axis: Vec<f64> = eval_points.iter().copied().filter(|&e| e <= budget).collect();
    axis.push(budget);
    axis.sort_by(f64::total_cmp);
    axis.dedup();
    Ok(axis)
}

/// Votes corresponding to `trials` standard trial numbers for `n` items.
pub fn votes_for(trials: f64, n: usize) -> u64 {
    (trials * standard_trial(n) as f64).round() as u64
}

/// Settings shared by every run of a simulation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOptions {
    pub quadrature: Quadrature,
    /// Pseudo-count per ordered pair in the fit that is scored. The sampler
    /// always fits with [`DEFAULT_PRIOR_COUNT`]; the pseudo-counts keep the
    /// model resolvable but are not annotator data, so by default runs are
    /// scored on the maximum likelihood estimate of the observed votes alone
    /// (falling back to the regularized fit while that estimate does not
    /// exist, i.e. while the observed comparison graph is not strongly
    /// connected).
    pub evaluation_prior: u64,
}

/// Comparison matrix plus a lazily refreshed, warm-started fit.
struct Model {
    matrix: ComparisonMatrix,
    estimate: Option<ScoreEstimate>,
    fitted_votes: Option<u64>,
}

impl Model {
    fn new(n: usize) -> Self {
        Self {
            matrix: ComparisonMatrix::with_prior(n, DEFAULT_PRIOR_COUNT),
            estimate: None,
            fitted_votes: None,
        }
    }

    fn estimate(&mut self) -> Result<&ScoreEstimate> {
        let votes = self.matrix.observed_total();
        if self.fitted_votes != Some(votes) {
            let opts = match &self.estimate {
                Some(prev) => FitOptions::default().warm(prev.scores()),
                None => FitOptions::default(),
            };
            self.estimate = Some(fit_bt(&self.matrix, &opts)?);
            self.fitted_votes = Some(votes);
        }
        Ok(self.estimate.as_ref().expect("fitted above"))
    }

    /// Fit with `prior` pseudo-counts in place of the sampling prior.
    fn evaluation_estimate(&mut self, prior: u64) -> Result<ScoreEstimate> {
        let sampling = self.estimate()?.clone();
        if prior == self.matrix.prior() {
            return Ok(sampling);
        }
        let mut m = self.matrix.clone();
        m.set_prior(prior);
        match fit_bt(&m, &FitOptions::default().warm(sampling.scores())) {
            Err(Error::Unidentifiable(_)) => Ok(sampling),
            other => other,
        }
    }
}

fn score_metrics(est: &ScoreEstimate, truth: &[f64]) -> Result<(f64, f64, f64)> {
    // A constant estimate carries no ordering information; score it as zero
    // correlation rather than aborting the run.
    let undefined_as_zero = |r: Result<f64>| match r {
        Err(Error::UndefinedCorrelation) => Ok(0.0),
        other => other,
    };
    let k = undefined_as_zero(kendall_tau(est.scores(), truth))?;
    let p = undefined_as_zero(plcc(est.scores(), truth))?;
    let r = aligned_rmse(est.scores(), truth)?;
    Ok((k, p, r))
}

/// Runs `strategy` for `budget` standard trials and scores the fit against
/// `gt.scores` at every point of [`evaluation_axis`].
///
/// Every strategy starts from a matrix with one pseudo-count per ordered
/// pair. Active strategies refit before each selection; batches are voted
/// in full unless the budget runs out mid-batch. The scored estimate is
/// chosen by [`ExperimentOptions::evaluation_prior`].
pub fn run_experiment(
    gt: &GroundTruth,
    strategy: Strategy,
    budget: f64,
    eval_points: &[f64],
    opts: &ExperimentOptions,
    rng: &mut RngStream,
) -> Result<MetricTrajectory> {
    run_experiment_detailed(gt, strategy, budget, eval_points, opts, rng).map(|o| o.trajectory)
}

/// Trajectory of a run together with the votes it collected.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub trajectory: MetricTrajectory,
    /// Final matrix, including the sampling pseudo-counts.
    pub matrix: ComparisonMatrix,
}

/// [`run_experiment`], also returning the final comparison matrix.
pub fn run_experiment_detailed(
    gt: &GroundTruth,
    strategy: Strategy,
    budget: f64,
    eval_points: &[f64],
    opts: &ExperimentOptions,
    rng: &mut RngStream,
) -> Result<ExperimentOutcome> {
    let n = gt.n();
    let axis = evaluation_axis(budget, eval_points)?;
    let targets: Vec<u64> = axis.iter().map(|&e| votes_for(e, n)).collect();
    let total = *targets.last().expect("axis is never empty");

    let mut model = Model::new(n);
    let mut traj = MetricTrajectory {
        budget_axis: axis,
        comparisons: Vec::with_capacity(targets.len()),
        kendall: Vec::with_capacity(targets.len()),
        plcc: Vec::with_capacity(targets.len()),
        rmse: Vec::with_capacity(targets.len()),
        repetitions: 1,
    };
    let evaluate = |model: &mut Model, traj: &mut MetricTrajectory| -> Result<()> {
        let votes = model.matrix.observed_total();
        let est = model.evaluation_estimate(opts.evaluation_prior)?;
        let (k, p, r) = score_metrics(&est, &gt.scores)?;
        traj.comparisons.push(votes);
        traj.kendall.push(k);
        traj.plcc.push(p);
        traj.rmse.push(r);
        Ok(())
    };

    let all_pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    let mut next_target = 0;
    let mut votes = 0u64;
    while next_target < targets.len() && targets[next_target] == 0 {
        evaluate(&mut model, &mut traj)?;
        next_target += 1;
    }
    while votes < total {
        if queue.is_empty() {
            if strategy.is_active() {
                let g = utility_graph(model.estimate()?, &opts.quadrature);
                match strategy {
                    Strategy::HybridMst => queue.extend(next_batch(&g, &SamplerState::new(n, votes))?.into_pairs()),
                    Strategy::GmOnly => queue.push_back(select_gm(&g)?),
                    Strategy::MstOnly => queue.extend(select_mst(&g)?.into_pairs()),
                    Strategy::Random | Strategy::Fpc => unreachable!(),
                }
            } else if strategy == Strategy::Random {
                queue.push_back(all_pairs[rng.index(all_pairs.len())]);
            } else {
                let mut round = all_pairs.clone();
                round.shuffle(rng);
                queue.extend(round);
            }
        }
        let (i, j) = queue.pop_front().expect("queue refilled above");
        if simulate_vote(gt, i, j, rng)? == 1 {
            model.matrix.record(i, j)?;
        } else {
            model.matrix.record(j, i)?;
        }
        votes += 1;
        while next_target < targets.len() && targets[next_target] == votes {
            evaluate(&mut model, &mut traj)?;
            next_target += 1;
        }
    }
    Ok(ExperimentOutcome {
        trajectory: traj,
        matrix: model.matrix,
    })
}

/// Observed matrix after `rounds` full pair comparison rounds; exposed so
/// callers can inspect what an FPC run collects.
pub fn fpc_matrix(gt: &GroundTruth, rounds: u64, rng: &mut RngStream) -> Result<ComparisonMatrix> {
    let n = gt.n();
    let mut m = ComparisonMatrix::new(n);
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    for _ in 0..rounds {
        pairs.shuffle(rng);
        for &(i, j) in &pairs {
            if simulate_vote(gt, i, j, rng)? == 1 {
                m.record(i, j)?;
            } else {
                m.record(j, i)?;
            }
        }
    }
    Ok(m)
}
