//! Repeated runs, summaries and reports.
//!
//! Repetition `r` uses seed `config.seed + r`: stream 0 of that seed draws
//! the ground truth and each strategy votes from its own stream, so every
//! strategy in a repetition sees the same items. Repetitions run in
//! parallel; results do not depend on the schedule.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{evaluation_axis, run_experiment, votes_for, ExperimentOptions, MetricTrajectory, Strategy};
use super::metrics::{rescale_fisher, rescale_neg_inv, saving_budget};
use super::stats::{mean_ci, paired_t_test, MeanCi, PairedTTest};
use super::truth::{gen_ground_truth, RngStream};
use crate::error::{Error, Result};
use crate::quadrature::{gh_nodes_weights, DEFAULT_ORDER, MAX_ORDER};

/// Rounds of full pair comparison used as the reference budget.
pub const FPC_REFERENCE_ROUNDS: f64 = 15.0;

pub const DEFAULT_EVAL_POINTS: [f64; 8] = [0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 15.0];

fn default_n() -> usize {
    20
}
fn default_error_rate() -> f64 {
    0.1
}
fn default_budget() -> f64 {
    15.0
}
fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::HybridMst, Strategy::Random]
}
fn default_reps() -> usize {
    100
}
fn default_eval_points() -> Vec<f64> {
    DEFAULT_EVAL_POINTS.to_vec()
}
fn default_quadrature_order() -> usize {
    DEFAULT_ORDER
}

/// Monte Carlo protocol. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Number of items (default 20).
    #[serde(default = "default_n")]
    pub n: usize,
    /// Probability of a vote inversion (default 0.1).
    #[serde(default = "default_error_rate")]
    pub error_rate: f64,
    /// Votes per run, in standard trial numbers (default 15).
    #[serde(default = "default_budget")]
    pub budget: f64,
    /// Default: hybrid-mst and random.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Default 100.
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Base seed (default 0).
    #[serde(default)]
    pub seed: u64,
    /// Points in standard trial numbers; those above `budget` are dropped.
    #[serde(default = "default_eval_points")]
    pub eval_points: Vec<f64>,
    #[serde(default = "default_quadrature_order")]
    pub quadrature_order: usize,
    /// Pseudo-counts in the scored fit (default 0: observed votes only).
    #[serde(default)]
    pub evaluation_prior: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            error_rate: default_error_rate(),
            budget: default_budget(),
            strategies: default_strategies(),
            reps: default_reps(),
            seed: 0,
            eval_points: default_eval_points(),
            quadrature_order: default_quadrature_order(),
            evaluation_prior: 0,
        }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("n must be at least 2, got {}", self.n)));
        }
        if !(0.0..1.0).contains(&self.error_rate) {
            return Err(Error::invalid(format!(
                "error_rate must be in [0, 1), got {}",
                self.error_rate
            )));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid("at least one strategy is required"));
        }
        for (k, s) in self.strategies.iter().enumerate() {
            if self.strategies[..k].contains(s) {
                return Err(Error::invalid(format!("strategy {s} listed twice")));
            }
        }
        if !(1..=MAX_ORDER).contains(&self.quadrature_order) {
            return Err(Error::invalid(format!(
                "quadrature_order must be in 1..={MAX_ORDER}, got {}",
                self.quadrature_order
            )));
        }
        if self.seed.checked_add(self.reps as u64).is_none() {
            return Err(Error::invalid("seed + reps overflows 64 bits"));
        }
        evaluation_axis(self.budget, &self.eval_points)?;
        Ok(())
    }

    pub fn axis(&self) -> Result<Vec<f64>> {
        evaluation_axis(self.budget, &self.eval_points)
    }
}

/// Which metric a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Kendall,
    Plcc,
    Rmse,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Kendall, Metric::Plcc, Metric::Rmse];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Kendall => "kendall",
            Metric::Plcc => "plcc",
            Metric::Rmse => "rmse",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Rmse)
    }

    /// Values of this metric along a trajectory.
    pub fn of(self, t: &MetricTrajectory) -> &[f64] {
        match self {
            Metric::Kendall => &t.kendall,
            Metric::Plcc => &t.plcc,
            Metric::Rmse => &t.rmse,
        }
    }

    /// Display rescaling: arctanh for correlations, `-1/y` for RMSE.
    pub fn rescale(self, v: f64) -> f64 {
        match self {
            Metric::Kendall | Metric::Plcc => rescale_fisher(v),
            Metric::Rmse => rescale_neg_inv(v).unwrap_or(f64::NEG_INFINITY),
        }
    }

    fn reaches(self, value: f64, target: f64) -> bool {
        if self.higher_is_better() {
            value >= target
        } else {
            value <= target
        }
    }
}

/// One repetition of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub rep: usize,
    pub trajectory: MetricTrajectory,
}

/// Mean and 95% interval over repetitions at every evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub budget_axis: Vec<f64>,
    pub comparisons: Vec<u64>,
    pub kendall: Vec<MeanCi>,
    pub plcc: Vec<MeanCi>,
    pub rmse: Vec<MeanCi>,
    pub repetitions: usize,
}

impl StrategySummary {
    pub fn metric(&self, m: Metric) -> &[MeanCi] {
        match m {
            Metric::Kendall => &self.kendall,
            Metric::Plcc => &self.plcc,
            Metric::Rmse => &self.rmse,
        }
    }
}

/// Mean metrics after fifteen full rounds of pair comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLevel {
    pub comparisons: u64,
    pub kendall: MeanCi,
    pub plcc: MeanCi,
    pub rmse: MeanCi,
}

impl ReferenceLevel {
    pub fn metric(&self, m: Metric) -> MeanCi {
        match m {
            Metric::Kendall => self.kendall,
            Metric::Plcc => self.plcc,
            Metric::Rmse => self.rmse,
        }
    }
}

/// Budget at which a strategy's mean curve first reaches the reference level.
///
/// The crossing is located by linear interpolation of the mean curve between
/// the two evaluation points that bracket it. `None` when the curve never
/// reaches the reference within the simulated budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingBudget {
    pub strategy: Strategy,
    pub metric: Metric,
    /// Standard trial numbers needed.
    pub trials: Option<f64>,
    pub comparisons: Option<f64>,
    /// Percentage of the reference budget avoided.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config: SimulationConfig,
    pub strategies: Vec<StrategySummary>,
    pub reference: ReferenceLevel,
    pub saving_budget: Vec<SavingBudget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Ordered by repetition, then by strategy as listed in the config.
    pub runs: Vec<RunRecord>,
    /// Final metrics of the reference runs, one per repetition.
    pub reference_runs: Vec<MetricTrajectory>,
    pub summary: SimulationSummary,
}

impl SimulationResult {
    /// Trajectories of one strategy, ordered by repetition.
    pub fn trajectories(&self, strategy: Strategy) -> Vec<&MetricTrajectory> {
        self.runs
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| &r.trajectory)
            .collect()
    }

    pub fn summary_for(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summary.strategies.iter().find(|s| s.strategy == strategy)
    }
}

fn summarize(strategy: Strategy, trajectories: &[&MetricTrajectory]) -> StrategySummary {
    let first = trajectories[0];
    let column = |m: Metric| -> Vec<MeanCi> {
        (0..first.budget_axis.len())
            .map(|k| mean_ci(&trajectories.iter().map(|t| m.of(t)[k]).collect::<Vec<_>>()))
            .collect()
    };
    StrategySummary {
        strategy,
        budget_axis: first.budget_axis.clone(),
        comparisons: first.comparisons.clone(),
        kendall: column(Metric::Kendall),
        plcc: column(Metric::Plcc),
        rmse: column(Metric::Rmse),
        repetitions: trajectories.len(),
    }
}

fn reference_level(runs: &[MetricTrajectory]) -> ReferenceLevel {
    let last = |m: Metric| {
        mean_ci(
            &runs
                .iter()
                .map(|t| *m.of(t).last().expect("non-empty"))
                .collect::<Vec<_>>(),
        )
    };
    ReferenceLevel {
        comparisons: *runs[0].comparisons.last().expect("non-empty"),
        kendall: last(Metric::Kendall),
        plcc: last(Metric::Plcc),
        rmse: last(Metric::Rmse),
    }
}

/// Interpolated budget at which `summary`'s mean `metric` reaches `target`.
pub fn crossing_point(summary: &StrategySummary, metric: Metric, target: f64) -> Option<f64> {
    let means: Vec<f64> = summary.metric(metric).iter().map(|c| c.mean).collect();
    let axis = &summary.budget_axis;
    let hit = means.iter().position(|&v| metric.reaches(v, target))?;
    if hit == 0 {
        return Some(axis[0]);
    }
    let (x0, x1, y0, y1) = (axis[hit - 1], axis[hit], means[hit - 1], means[hit]);
    Some(x0 + (x1 - x0) * (target - y0) / (y1 - y0))
}

fn saving_budgets(
    cfg: &SimulationConfig,
    summaries: &[StrategySummary],
    reference: &ReferenceLevel,
) -> Vec<SavingBudget> {
    let mut out = Vec::new();
    for s in summaries {
        for m in Metric::ALL {
            let trials = crossing_point(s, m, reference.metric(m).mean);
            let comparisons = trials.map(|t| t * crate::sampler::standard_trial(cfg.n) as f64);
            let percent = comparisons.and_then(|d| saving_budget(d, cfg.n).ok());
            out.push(SavingBudget {
                strategy: s.strategy,
                metric: m,
                trials,
                comparisons,
                percent,
            });
        }
    }
    out
}

/// Runs every strategy `cfg.reps` times, plus the fifteen-round full pair
/// comparison reference on the same ground truths.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    let opts = ExperimentOptions {
        quadrature: gh_nodes_weights(cfg.quadrature_order)?,
        evaluation_prior: cfg.evaluation_prior,
    };
    let per_rep: Vec<(Vec<RunRecord>, MetricTrajectory)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<_> {
            let seed = cfg.seed + rep as u64;
            let gt = gen_ground_truth(cfg.n, cfg.error_rate, &mut RngStream::with_stream(seed, 0))?;
            let mut runs = Vec::with_capacity(cfg.strategies.len());
            for &strategy in &cfg.strategies {
                let mut rng = RngStream::with_stream(seed, strategy.stream_id());
                let trajectory = run_experiment(&gt, strategy, cfg.budget, &cfg.eval_points, &opts, &mut rng)?;
                runs.push(RunRecord {
                    strategy,
                    rep,
                    trajectory,
                });
            }
            let mut rng = RngStream::with_stream(seed, Strategy::Fpc.stream_id());
            let reference = run_experiment(&gt, Strategy::Fpc, FPC_REFERENCE_ROUNDS, &[], &opts, &mut rng)?;
            Ok((runs, reference))
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::with_capacity(cfg.reps * cfg.strategies.len());
    let mut reference_runs = Vec::with_capacity(cfg.reps);
    for (r, reference) in per_rep {
        runs.extend(r);
        reference_runs.push(reference);
    }
    let summaries: Vec<StrategySummary> = cfg
        .strategies
        .iter()
        .map(|&s| {
            let ts: Vec<&MetricTrajectory> = runs.iter().filter(|r| r.strategy == s).map(|r| &r.trajectory).collect();
            summarize(s, &ts)
        })
        .collect();
    let reference = reference_level(&reference_runs);
    let saving_budget = saving_budgets(cfg, &summaries, &reference);
    Ok(SimulationResult {
        runs,
        reference_runs,
        summary: SimulationSummary {
            config: cfg.clone(),
            strategies: summaries,
            reference,
            saving_budget,
        },
    })
}

/// Writes one row per run and evaluation point:
/// `strategy,rep,budget,kendall,plcc,rmse`.
pub fn write_trajectories_csv(writer: impl Write, runs: &[RunRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.into());
    csv.write_record(["strategy", "rep", "budget", "kendall", "plcc", "rmse"])
        .map_err(io)?;
    for r in runs {
        let t = &r.trajectory;
        for k in 0..t.budget_axis.len() {
            csv.write_record([
                r.strategy.name().to_string(),
                r.rep.to_string(),
                t.budget_axis[k].to_string(),
                t.kendall[k].to_string(),
                t.plcc[k].to_string(),
                t.rmse[k].to_string(),
            ])
            .map_err(io)?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn write_summary_json(writer: impl Write, summary: &SimulationSummary) -> Result<()> {
    serde_json::to_writer_pretty(writer, summary)?;
    Ok(())
}

/// Human-readable mean ± 95% interval table, optionally on the display
/// scale (arctanh for correlations, `-1/y` for RMSE), followed by the
/// saving-budget figures.
pub fn format_summary_table(summary: &SimulationSummary, rescaled: bool) -> String {
    let mut out = String::new();
    let cell = |m: Metric, c: &MeanCi| -> String {
        if rescaled {
            let (lo, mid, hi) = (
                m.rescale(c.mean - c.ci95),
                m.rescale(c.mean),
                m.rescale(c.mean + c.ci95),
            );
            format!("{mid:>8.4} [{lo:.4}, {hi:.4}]")
        } else {
            format!("{:>8.4} ± {:.4}", c.mean, c.ci95)
        }
    };
    let scale = if rescaled { " (rescaled)" } else { "" };
    for s in &summary.strategies {
        let _ = writeln!(out, "strategy {} ({} reps){scale}", s.strategy, s.repetitions);
        let _ = writeln!(
            out,
            "{:>8} {:>8}  {:<26} {:<26} {:<26}",
            "budget", "votes", "kendall", "plcc", "rmse"
        );
        for k in 0..s.budget_axis.len() {
            let _ = writeln!(
                out,
                "{:>8} {:>8}  {:<26} {:<26} {:<26}",
                s.budget_axis[k],
                s.comparisons[k],
                cell(Metric::Kendall, &s.kendall[k]),
                cell(Metric::Plcc, &s.plcc[k]),
                cell(Metric::Rmse, &s.rmse[k]),
            );
        }
        let _ = writeln!(out);
    }
    let r = &summary.reference;
    let _ = writeln!(
        out,
        "reference: {} rounds of full pair comparison ({} votes): kendall {:.4}, plcc {:.4}, rmse {:.4}",
        FPC_REFERENCE_ROUNDS, r.comparisons, r.kendall.mean, r.plcc.mean, r.rmse.mean
    );
    for b in &summary.saving_budget {
        match (b.trials, b.percent) {
            (Some(t), Some(p)) => {
                let _ = writeln!(
                    out,
                    "saving budget {} {}: {p:.2}% (reached at {t:.3} standard trials)",
                    b.strategy,
                    b.metric.name()
                );
            }
            _ => {
                let _ = writeln!(
                    out,
                    "saving budget {} {}: reference level not reached",
                    b.strategy,
                    b.metric.name()
                );
            }
        }
    }
    out
}

/// Paired t-test of `a` against `b` at every evaluation point, paired by
/// repetition.
pub fn paired_comparison(
    result: &SimulationResult,
    a: Strategy,
    b: Strategy,
    metric: Metric,
) -> Result<Vec<(f64, PairedTTest)>> {
    let ta = result.trajectories(a);
    let tb = result.trajectories(b);
    if ta.is_empty() || tb.is_empty() {
        return Err(Error::invalid(format!("both {a} and {b} must have been simulated")));
    }
    let axis = &ta[0].budget_axis;
    (0..axis.len())
        .map(|k| {
            let xa: Vec<f64> = ta.iter().map(|t| metric.of(t)[k]).collect();
            let xb: Vec<f64> = tb.iter().map(|t| metric.of(t)[k]).collect();
            Ok((axis[k], paired_t_test(&xa, &xb)?))
        })
        .collect()
}

/// Eval-point votes for a configuration, for callers that want the
/// comparison counts without running anything.
pub fn axis_comparisons(cfg: &SimulationConfig) -> Result<Vec<u64>> {
    Ok(cfg.axis()?.iter().map(|&e| votes_for(e, cfg.n)).collect())
}
