//! Bradley-Terry model over a dense comparison matrix.
//!
//! Scores are log-merits `s_i = log(pi_i)`, so the probability that item `i`
//! beats item `j` is the logistic function of `s_i - s_j`. Scores are only
//! identified up to an additive constant; every fit returned here is
//! normalized to mean zero, which is the same gauge the augmented-Hessian
//! covariance uses (its bordering row of ones is a sum constraint).
//!
//! The fit maximizes the log-likelihood with damped Newton steps taken inside
//! the sum-zero subspace. Each step solves the bordered system
//!
//! ```text
//! [ -H  1 ] [ d ]   [ g ]
//! [ 1'  0 ] [ l ] = [ 0 ]
//! ```
//!
//! which is the same matrix whose inverse provides the covariance estimate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pseudo-count placed on every off-diagonal cell of a fresh experiment.
pub const DEFAULT_PRIOR_COUNT: u64 = 1;

/// Ridge added to `-H` when the bordered matrix is numerically singular.
pub const COVARIANCE_RIDGE: f64 = 1e-8;

/// Dense `n x n` win counts. `get(i, j)` is the number of times item `i` beat
/// item `j`, including `prior` virtual wins in every off-diagonal cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct ComparisonMatrix {
    n: usize,
    prior: u64,
    counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    n: usize,
    prior: u64,
    counts: Vec<Vec<u64>>,
}

impl From<ComparisonMatrix> for MatrixRepr {
    fn from(m: ComparisonMatrix) -> Self {
        MatrixRepr {
            n: m.n,
            prior: m.prior,
            counts: m.to_rows(),
        }
    }
}

impl TryFrom<MatrixRepr> for ComparisonMatrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        if repr.counts.len() != repr.n {
            return Err(Error::invalid(format!(
                "declared n = {} but {} rows given",
                repr.n,
                repr.counts.len()
            )));
        }
        ComparisonMatrix::from_counts(repr.counts, repr.prior)
    }
}

impl ComparisonMatrix {
    /// Empty matrix without pseudo-counts.
    pub fn new(n: usize) -> Self {
        Self::with_prior(n, 0)
    }

    /// Matrix whose off-diagonal cells all start at `prior`.
    pub fn with_prior(n: usize, prior: u64) -> Self {
        let mut counts = vec![prior; n * n];
        for i in 0..n {
            counts[i * n + i] = 0;
        }
        Self { n, prior, counts }
    }

    /// Builds a matrix from full rows (pseudo-counts already included).
    pub fn from_counts(rows: Vec<Vec<u64>>, prior: u64) -> Result<Self> {
        let n = rows.len();
        let mut counts = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                if i == j && c != 0 {
                    return Err(Error::invalid(format!("diagonal entry ({i},{i}) is {c}")));
                }
                if i != j && c < prior {
                    return Err(Error::invalid(format!(
                        "entry ({i},{j}) = {c} is below the prior count {prior}"
                    )));
                }
            }
            counts.extend(row);
        }
        Ok(Self { n, prior, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn prior(&self) -> u64 {
        self.prior
    }

    /// Total count for `i` beating `j`, pseudo-counts included.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    /// Observed wins of `i` over `j`, pseudo-counts excluded.
    pub fn observed(&self, i: usize, j: usize) -> u64 {
        if i == j {
            0
        } else {
            self.get(i, j) - self.prior
        }
    }

    /// Comparisons of the pair in either direction, pseudo-counts included.
    #[inline]
    pub fn pair_total(&self, i: usize, j: usize) -> u64 {
        self.get(i, j) + self.get(j, i)
    }

    /// Sum of all observed (non-virtual) outcomes.
    pub fn observed_total(&self) -> u64 {
        let virtual_total = self.prior * (self.n * self.n.saturating_sub(1)) as u64;
        self.counts.iter().sum::<u64>() - virtual_total
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::invalid(format!(
                "pair ({i},{j}) out of range for {} items",
                self.n
            )));
        }
        if i == j {
            return Err(Error::invalid(format!("pair ({i},{i}) compares an item with itself")));
        }
        Ok(())
    }

    /// Records one outcome where `winner` beat `loser`.
    pub fn record(&mut self, winner: usize, loser: usize) -> Result<()> {
        self.add(winner, loser, 1)
    }

    /// Adds `count` observed wins of `winner` over `loser`.
    pub fn add(&mut self, winner: usize, loser: usize, count: u64) -> Result<()> {
        self.check_pair(winner, loser)?;
        self.counts[winner * self.n + loser] += count;
        Ok(())
    }

    /// Appends a new item with no observed comparisons.
    pub fn push_item(&mut self) {
        let n = self.n + 1;
        let mut counts = vec![self.prior; n * n];
        for i in 0..n {
            counts[i * n + i] = 0;
        }
        for i in 0..self.n {
            for j in 0..self.n {
                counts[i * n + j] = self.counts[i * self.n + j];
            }
        }
        self.n = n;
        self.counts = counts;
    }

    /// Replaces the pseudo-count on every off-diagonal cell, keeping the
    /// observed counts.
    pub fn set_prior(&mut self, prior: u64) {
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let c = &mut self.counts[i * self.n + j];
                    *c = *c - self.prior + prior;
                }
            }
        }
        self.prior = prior;
    }

    /// Full rows including pseudo-counts.
    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.n.max(1))
            .take(self.n)
            .map(<[u64]>::to_vec)
            .collect()
    }

    /// `(winner, loser, count)` for every cell with a positive observed count,
    /// in row-major order.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n).filter_map(move |j| {
                let c = self.observed(i, j);
                (c > 0).then_some((i, j, c))
            })
        })
    }

    /// Whether the undirected graph with an edge for every compared pair is
    /// connected.
    pub fn is_connected(&self) -> bool {
        self.reaches_all(0, |i, j| self.pair_total(i, j) > 0)
    }

    /// Whether every item can reach every other along "beat" edges. This is
    /// the condition for the likelihood to have a finite maximizer.
    pub fn is_strongly_connected(&self) -> bool {
        self.reaches_all(0, |i, j| self.get(i, j) > 0) && self.reaches_all(0, |i, j| self.get(j, i) > 0)
    }

    fn reaches_all(&self, start: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for v in 0..self.n {
                if !seen[v] && u != v && edge(u, v) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Maximum-likelihood scores and their approximate posterior covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EstimateRepr", into = "EstimateRepr")]
pub struct ScoreEstimate {
    scores: Vec<f64>,
    covariance: DMatrix<f64>,
    log_likelihood: f64,
    iterations: usize,
}

#[derive(Serialize, Deserialize)]
struct EstimateRepr {
    scores: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    #[serde(default)]
    log_likelihood: f64,
    #[serde(default)]
    iterations: usize,
}

impl From<ScoreEstimate> for EstimateRepr {
    fn from(e: ScoreEstimate) -> Self {
        let n = e.scores.len();
        EstimateRepr {
            covariance: (0..n).map(|i| (0..n).map(|j| e.covariance[(i, j)]).collect()).collect(),
            scores: e.scores,
            log_likelihood: e.log_likelihood,
            iterations: e.iterations,
        }
    }
}

impl TryFrom<EstimateRepr> for ScoreEstimate {
    type Error = Error;

    fn try_from(r: EstimateRepr) -> Result<Self> {
        let n = r.scores.len();
        if r.covariance.len() != n || r.covariance.iter().any(|row| row.len() != n) {
            return Err(Error::invalid("covariance shape does not match score count"));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| r.covariance[i][j]);
        let mut est = ScoreEstimate::new(r.scores, cov)?;
        est.log_likelihood = r.log_likelihood;
        est.iterations = r.iterations;
        Ok(est)
    }
}

impl ScoreEstimate {
    /// Wraps externally produced scores and covariance. No gauge is imposed.
    pub fn new(scores: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = scores.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::invalid(format!(
                "covariance is {}x{}, expected {n}x{n}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if scores.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("estimate contains non-finite values"));
        }
        Ok(Self {
            scores,
            covariance,
            log_likelihood: f64::NAN,
            iterations: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Log-likelihood at the fitted scores (NaN for hand-built estimates).
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `sqrt(diag(covariance))`, with round-off negatives read as zero.
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.covariance[(i, i)].max(0.0).sqrt()).collect()
    }

    /// Item indices by descending score; equal scores keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the largest gradient component.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Starting point; re-centred before use. Zeros when absent.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iters: 200,
            warm_start: None,
        }
    }
}

impl FitOptions {
    pub fn warm(mut self, start: &[f64]) -> Self {
        self.warm_start = Some(start.to_vec());
        self
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Probability that an item with score `score_i` beats one with `score_j`.
pub fn bt_probability(score_i: f64, score_j: f64) -> Result<f64> {
    if !score_i.is_finite() || !score_j.is_finite() {
        return Err(Error::invalid(format!(
            "scores must be finite, got ({score_i}, {score_j})"
        )));
    }
    Ok(sigmoid(score_i - score_j))
}

fn check_scores(m: &ComparisonMatrix, s: &[f64]) -> Result<()> {
    if s.len() != m.n() {
        return Err(Error::invalid(format!(
            "score vector has {} entries, matrix has {} items",
            s.len(),
            m.n()
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    Ok(())
}

/// `sum_{i != j} m_ij * log(pi_ij)`, i.e. the log of the product over `i < j`
/// of `pi_ij^m_ij * (1 - pi_ij)^m_ji`.
pub fn log_likelihood(m: &ComparisonMatrix, s: &[f64]) -> Result<f64> {
    check_scores(m, s)?;
    Ok(log_likelihood_unchecked(m, s))
}

fn log_likelihood_unchecked(m: &ComparisonMatrix, s: &[f64]) -> f64 {
    let n = m.n();
    let mut ll = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let (wij, wji) = (m.get(i, j), m.get(j, i));
            let d = s[i] - s[j];
            if wij > 0 {
                ll -= wij as f64 * softplus(-d);
            }
            if wji > 0 {
                ll -= wji as f64 * softplus(d);
            }
        }
    }
    ll
}

/// Gradient of the log-likelihood: `g_i = sum_j (m_ij - (m_ij + m_ji) pi_ij)`.
pub fn gradient(m: &ComparisonMatrix, s: &[f64]) -> Result<Vec<f64>> {
    check_scores(m, s)?;
    Ok(gradient_unchecked(m, s))
}

fn gradient_unchecked(m: &ComparisonMatrix, s: &[f64]) -> Vec<f64> {
    let n = m.n();
    let mut g = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let t = m.pair_total(i, j);
            if t == 0 {
                continue;
            }
            // m_ij - t * pi_ij == m_ij * pi_ji - m_ji * pi_ij, which avoids cancellation
            let p = sigmoid(s[i] - s[j]);
            let q = sigmoid(s[j] - s[i]);
            let r = m.get(i, j) as f64 * q - m.get(j, i) as f64 * p;
            g[i] += r;
            g[j] -= r;
        }
    }
    g
}

/// Hessian of the log-likelihood (negative semidefinite, rows sum to zero).
pub fn hessian(m: &ComparisonMatrix, s: &[f64]) -> Result<DMatrix<f64>> {
    check_scores(m, s)?;
    Ok(hessian_unchecked(m, s))
}

fn hessian_unchecked(m: &ComparisonMatrix, s: &[f64]) -> DMatrix<f64> {
    let n = m.n();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let t = m.pair_total(i, j);
            if t == 0 {
                continue;
            }
            let w = t as f64 * sigmoid(s[i] - s[j]) * sigmoid(s[j] - s[i]);
            h[(i, j)] = w;
            h[(j, i)] = w;
            h[(i, i)] -= w;
            h[(j, j)] -= w;
        }
    }
    h
}

fn bordered(neg_h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = neg_h.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(neg_h);
    for i in 0..n {
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
    }
    a
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn centre(s: &mut [f64]) {
    if s.is_empty() {
        return;
    }
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    s.iter_mut().for_each(|v| *v -= mean);
}

/// Maximum-likelihood fit with covariance from the bordered Hessian.
pub fn fit_bt(m: &ComparisonMatrix, opts: &FitOptions) -> Result<ScoreEstimate> {
    let n = m.n();
    if n == 0 {
        return Err(Error::invalid("cannot fit an empty comparison matrix"));
    }
    if !m.is_connected() {
        return Err(Error::Unidentifiable(
            "comparison graph is disconnected; relative scores of its components are undetermined".into(),
        ));
    }
    if !m.is_strongly_connected() {
        return Err(Error::Unidentifiable(
            "some items never lost (or never won) against the rest; the likelihood has no finite maximizer".into(),
        ));
    }

    let mut s = match &opts.warm_start {
        Some(w) if w.len() == n && w.iter().all(|v| v.is_finite()) => w.clone(),
        Some(w) if w.len() != n => {
            return Err(Error::invalid(format!(
                "warm start has {} entries, matrix has {n} items",
                w.len()
            )))
        }
        _ => vec![0.0; n],
    };
    centre(&mut s);

    let mut ll = log_likelihood_unchecked(m, &s);
    let mut g = gradient_unchecked(m, &s);
    let mut iterations = 0;
    while max_abs(&g) >= opts.grad_tol {
        if iterations == opts.max_iters {
            return Err(Error::Convergence {
                iterations,
                grad_norm: max_abs(&g),
                last: s,
            });
        }
        iterations += 1;

        let h = hessian_unchecked(m, &s);
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from_slice(&g);
        let newton = bordered(&(-h))
            .lu()
            .solve(&rhs)
            .map(|sol| sol.rows(0, n).iter().copied().collect::<Vec<_>>())
            .filter(|d| d.iter().all(|v| v.is_finite()));
        let ascent = |d: &[f64]| d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() > 0.0;
        let dir = match newton {
            Some(d) if ascent(&d) => d,
            _ => g.clone(),
        };

        // Backtracking; the slack admits round-off level decreases at the optimum.
        let slack = 1e-12 * (1.0 + ll.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<f64> = s.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            centre(&mut cand);
            let cand_ll = log_likelihood_unchecked(m, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - slack {
                accepted = Some((cand, cand_ll));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_ll)) = accepted else {
            return Err(Error::Convergence {
                iterations,
                grad_norm: max_abs(&g),
                last: s,
            });
        };
        s = cand;
        ll = cand_ll;
        g = gradient_unchecked(m, &s);
    }

    let covariance = covariance_from_hessian(&hessian_unchecked(m, &s))?;
    Ok(ScoreEstimate {
        scores: s,
        covariance,
        log_likelihood: ll,
        iterations,
    })
}

/// Top-left `n x n` block of `[[-H, 1], [1', 0]]^-1`.
///
/// When the bordered matrix is numerically singular, `COVARIANCE_RIDGE * I`
/// is added to `-H` once before giving up.
pub fn covariance_from_hessian(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::invalid(format!("Hessian is {}x{}, not square", n, h.ncols())));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("Hessian contains non-finite values"));
    }
    let scale = h.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (h[(i, j)] - h[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::invalid(format!("Hessian is not symmetric at ({i},{j})")));
            }
        }
    }

    let neg_h = -h;
    let inverse = invert_checked(&bordered(&neg_h)).or_else(|| {
        let ridged = &neg_h + DMatrix::identity(n, n) * COVARIANCE_RIDGE;
        invert_checked(&bordered(&ridged))
    });
    let Some(c) = inverse else {
        return Err(Error::Numerical(
            "bordered Hessian is singular even after ridge regularization".into(),
        ));
    };
    let block = c.view((0, 0), (n, n));
    Ok(DMatrix::from_fn(n, n, |i, j| 0.5 * (block[(i, j)] + block[(j, i)])))
}

/// Inverse that is rejected when it is non-finite or fails to reproduce the
/// identity, which is how near-singular systems show up under LU.
fn invert_checked(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = a.clone().try_inverse()?;
    if inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let residual = a * &inv - DMatrix::identity(a.nrows(), a.ncols());
    let err = residual.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    (err < 1e-6).then_some(inv)
}
