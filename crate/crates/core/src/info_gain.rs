//! Expected information gain of comparing a pair.
//!
//! For a pair whose score difference has a Gaussian prior `N(mu, sigma^2)`,
//! the gain is the mutual information between the difference and the binary
//! outcome:
//!
//! ```text
//! U = E[p log p] + E[q log q] - E[p] log E[p] - E[q] log E[q]
//! ```
//!
//! with `p = 1 / (1 + e^-x)`, `q = 1 - p`, and every expectation taken over
//! the prior. Substituting `x = sqrt(2) sigma y + mu` turns each expectation
//! into `(1/sqrt(pi)) integral f(y) e^(-y^2) dy`, evaluated by Gauss-Hermite
//! quadrature.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::bt::ScoreEstimate;
use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

/// Floor for probabilities entering a logarithm.
const LOG_FLOOR: f64 = 1e-300;

/// Gaussian prior on the score difference `s_i - s_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGaussian {
    mean: f64,
    std: f64,
}

impl PairGaussian {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(Error::invalid(format!(
                "pair prior needs finite mean and non-negative std, got ({mean}, {std})"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }
}

/// Symmetric matrix of pairwise gains; the diagonal is zero and unused.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityGraph {
    n: usize,
    utilities: Vec<f64>,
}

impl UtilityGraph {
    /// Builds a graph from a full matrix. Only the upper triangle is read;
    /// the lower triangle must mirror it.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("utility matrix must be square"));
        }
        let mut utilities = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let u = rows[i][j];
                if !u.is_finite() || u < 0.0 {
                    return Err(Error::invalid(format!(
                        "utility ({i},{j}) = {u} is not a finite non-negative value"
                    )));
                }
                if rows[j][i] != u {
                    return Err(Error::invalid(format!("utility matrix is not symmetric at ({i},{j})")));
                }
                utilities[i * n + j] = u;
                utilities[j * n + i] = u;
            }
        }
        Ok(Self { n, utilities })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.utilities[i * self.n + j]
    }

    /// Copy with `f` applied to every off-diagonal cell.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| if i == j { 0.0 } else { f(self.get(i, j)) })
                    .collect()
            })
            .collect();
        Self::from_matrix(&rows)
    }
}

/// `(p, q, log p, log q)` for `p = 1 / (1 + e^-x)`, from a single
/// exponential of `-|x|`. At extreme `x` the small probability underflows
/// to zero while its logarithm stays finite, so `0 * log 0` never arises.
#[inline]
fn outcome_probabilities(x: f64) -> (f64, f64, f64, f64) {
    let e = (-x.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e * big;
    let l = e.ln_1p();
    if x >= 0.0 {
        (big, small, -l, -x - l)
    } else {
        (small, big, x - l, -l)
    }
}

/// Gain before clamping at zero; exposed for checking how far round-off
/// pushes it below zero.
pub fn eig_pair_unclamped(prior: PairGaussian, quad: &Quadrature) -> f64 {
    if prior.std == 0.0 {
        return 0.0;
    }
    let scale = SQRT_2 * prior.std;
    let norm = 1.0 / PI.sqrt();
    let (mut e_p, mut e_q, mut e_plogp_qlogq) = (0.0, 0.0, 0.0);
    for (&y, &w) in quad.nodes().iter().zip(quad.weights()) {
        let x = scale * y + prior.mean;
        let (p, q, log_p, log_q) = outcome_probabilities(x);
        e_p += w * p;
        e_q += w * q;
        e_plogp_qlogq += w * (p * log_p + q * log_q);
    }
    e_p *= norm;
    e_q *= norm;
    e_plogp_qlogq *= norm;
    let e_p = e_p.clamp(LOG_FLOOR, 1.0);
    let e_q = e_q.clamp(LOG_FLOOR, 1.0);
    e_plogp_qlogq - e_p * e_p.ln() - e_q * e_q.ln()
}

/// Expected information gain of one comparison under `prior`; never negative.
pub fn eig_pair(prior: PairGaussian, quad: &Quadrature) -> f64 {
    eig_pair_unclamped(prior, quad).max(0.0)
}

/// Prior on `s_i - s_j` implied by a fitted estimate:
/// mean `s_i - s_j`, variance `C_ii + C_jj - 2 C_ij` (clamped at zero).
pub fn pair_prior(est: &ScoreEstimate, i: usize, j: usize) -> Result<PairGaussian> {
    let n = est.n();
    if i >= n || j >= n {
        return Err(Error::invalid(format!("pair ({i},{j}) out of range for {n} items")));
    }
    if i == j {
        return Err(Error::invalid(format!("pair ({i},{i}) compares an item with itself")));
    }
    let s = est.scores();
    let c = est.covariance();
    let var = c[(i, i)] + c[(j, j)] - 2.0 * c[(i, j)];
    PairGaussian::new(s[i] - s[j], var.max(0.0).sqrt())
}

/// Gains for every unordered pair of `est`.
pub fn utility_graph(est: &ScoreEstimate, quad: &Quadrature) -> UtilityGraph {
    let n = est.n();
    let mut utilities = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let prior = pair_prior(est, i, j).expect("indices are in range and distinct");
            let u = eig_pair(prior, quad);
            utilities[i * n + j] = u;
            utilities[j * n + i] = u;
        }
    }
    UtilityGraph { n, utilities }
}
