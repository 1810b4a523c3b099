//! Independent reference computations used by the integration and
//! acceptance tests. Nothing here calls the routine it is checking.
#![allow(dead_code)]

use hybrid_mst::simulator::RngStream;
use hybrid_mst::{ComparisonMatrix, UtilityGraph};
use nalgebra::DMatrix;

pub const MU_GRID: [f64; 9] = [-5.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 5.0];
pub const SIGMA_GRID: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

/// Expected information gain by the trapezoid rule in the standardized
/// variable `z ~ N(0, 1)` over `[-12, 12]`, straight from the definition
/// `U = E[p ln p] + E[q ln q] - E[p] ln E[p] - E[q] ln E[q]`.
pub fn eig_trapezoid(mean: f64, std: f64, step: f64) -> f64 {
    let steps = (24.0 / step).round() as usize;
    let h = 24.0 / steps as f64;
    let (mut ep, mut eq, mut ent) = (0.0, 0.0, 0.0);
    for k in 0..=steps {
        let z = -12.0 + k as f64 * h;
        let end = if k == 0 || k == steps { 0.5 } else { 1.0 };
        let wt = end * h * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let x = mean + std * z;
        let p = 1.0 / (1.0 + (-x).exp());
        let q = 1.0 / (1.0 + x.exp());
        let plogp = if p > 0.0 { p * p.ln() } else { 0.0 };
        let qlogq = if q > 0.0 { q * q.ln() } else { 0.0 };
        ep += wt * p;
        eq += wt * q;
        ent += wt * (plogp + qlogq);
    }
    ent - ep * ep.ln() - eq * eq.ln()
}

/// Bradley-Terry log-likelihood written out term by term.
pub fn log_likelihood_direct(m: &ComparisonMatrix, s: &[f64]) -> f64 {
    let n = m.n();
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && m.get(i, j) > 0 {
                let p = 1.0 / (1.0 + (s[j] - s[i]).exp());
                ll += m.get(i, j) as f64 * p.ln();
            }
        }
    }
    ll
}

/// Hessian of [`log_likelihood_direct`] by second-order central differences.
pub fn fd_hessian(m: &ComparisonMatrix, s: &[f64], h: f64) -> DMatrix<f64> {
    let n = s.len();
    let f = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut x = s.to_vec();
        x[di] += si * h;
        x[dj] += sj * h;
        log_likelihood_direct(m, &x)
    };
    DMatrix::from_fn(n, n, |i, j| {
        (f(i, 1.0, j, 1.0) - f(i, 1.0, j, -1.0) - f(i, -1.0, j, 1.0) + f(i, -1.0, j, -1.0)) / (4.0 * h * h)
    })
}

/// Top-left block of the inverse of `[[-H, 1], [1^T, 0]]`, by nalgebra's
/// general inverse.
pub fn bordered_covariance(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = -h[(i, j)];
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
    }
    let inv = a.try_inverse().expect("bordered matrix is invertible");
    inv.view((0, 0), (n, n)).into_owned()
}

/// `max |a - b| / max |b|`.
pub fn max_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    (a - b).iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / scale
}

/// Random counts in `0..=max_count` on every ordered pair, with `prior`
/// pseudo-counts.
pub fn random_matrix(n: usize, max_count: u64, prior: u64, rng: &mut RngStream) -> ComparisonMatrix {
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0
                    } else {
                        rng.index(max_count as usize + 1) as u64
                    }
                })
                .collect()
        })
        .collect();
    let mut m = ComparisonMatrix::from_counts(rows, 0).expect("valid counts");
    m.set_prior(prior);
    m
}

pub fn random_utility_graph(n: usize, rng: &mut RngStream) -> UtilityGraph {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let u = rng.uniform(0.0, 0.7);
            rows[i][j] = u;
            rows[j][i] = u;
        }
    }
    UtilityGraph::from_matrix(&rows).expect("valid graph")
}

/// Every labeled tree on `n >= 2` vertices, decoded from its Pruefer
/// sequence; each tree is returned as sorted `(i, j)` pairs with `i < j`.
pub fn all_labeled_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    assert!(n >= 2);
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    let mut trees = Vec::with_capacity(total);
    for code in 0..total {
        let mut seq = Vec::with_capacity(len);
        let mut c = code;
        for _ in 0..len {
            seq.push(c % n);
            c /= n;
        }
        let mut degree = vec![1usize; n];
        for &v in &seq {
            degree[v] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &v in &seq {
            let leaf = (0..n).find(|&u| degree[u] == 1).expect("a leaf exists");
            edges.push((leaf.min(v), leaf.max(v)));
            degree[leaf] -= 1;
            degree[v] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges.sort_unstable();
        trees.push(edges);
    }
    trees
}

/// Sum of `1 / max(U, 1e-12)` over the edges, accumulated in edge order.
pub fn tree_cost(g: &UtilityGraph, edges: &[(usize, usize)]) -> f64 {
    edges.iter().map(|&(i, j)| 1.0 / g.get(i, j).max(1e-12)).sum()
}

/// Minimum spanning-tree cost over all labeled trees.
pub fn exhaustive_min_tree_cost(g: &UtilityGraph) -> f64 {
    all_labeled_trees(g.n())
        .iter()
        .map(|t| tree_cost(g, t))
        .fold(f64::INFINITY, f64::min)
}

/// Pearson correlation, written out independently of the library.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
