//! Gauss-Hermite quadrature for integrals of the form
//! `integral f(x) e^(-x^2) dx` over the real line.
//!
//! Nodes start from the Golub-Welsch eigenvalues of the Hermite Jacobi
//! matrix and are polished by Newton steps on the orthonormal Hermite
//! recurrence. Weights follow `w_i = 2^(k-1) k! sqrt(pi) / (k^2 H_(k-1)(x_i)^2)`,
//! evaluated in the equivalent orthonormal form `1 / (k * h_(k-1)(x_i)^2)` so
//! that large orders do not overflow.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 30;
pub const MAX_ORDER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for Quadrature {
    fn default() -> Self {
        gh_nodes_weights(DEFAULT_ORDER).expect("default order is in range")
    }
}

impl Quadrature {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Ascending roots of the physicists' Hermite polynomial.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Orthonormal Hermite values `(h_k(x), h_(k-1)(x))`, where
/// `h_k = H_k / sqrt(2^k k! sqrt(pi))`.
fn orthonormal_hermite(k: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    for j in 0..k {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * cur - (jf / (jf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Nodes and weights of the `order`-point rule, `1 <= order <= 100`.
pub fn gh_nodes_weights(order: usize) -> Result<Quadrature> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::invalid(format!(
            "quadrature order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }

    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let kf = order as f64;
    for x in nodes.iter_mut() {
        for _ in 0..8 {
            let (h, h_prev) = orthonormal_hermite(order, *x);
            // h_k' = sqrt(2k) h_(k-1)
            let step = h / ((2.0 * kf).sqrt() * h_prev);
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }

    // Exact mirror symmetry; the middle node of an odd rule is zero.
    for i in 0..order / 2 {
        let r = 0.5 * (nodes[order - 1 - i] - nodes[i]);
        nodes[i] = -r;
        nodes[order - 1 - i] = r;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (_, h_prev) = orthonormal_hermite(order, x);
            1.0 / (kf * h_prev * h_prev)
        })
        .collect();
    for i in 0..order / 2 {
        let w = 0.5 * (weights[i] + weights[order - 1 - i]);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }

    Ok(Quadrature { order, nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Physicists' Hermite polynomial by the three-term recurrence, unscaled.
    fn hermite(k: usize, x: f64) -> f64 {
        let (mut prev, mut cur) = (0.0, 1.0);
        for j in 0..k {
            let next = 2.0 * x * cur - 2.0 * j as f64 * prev;
            prev = cur;
            cur = next;
        }
        cur
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|v| v as f64).product()
    }

    /// `integral x^(2m) e^(-x^2) dx = (2m-1)!! / 2^m * sqrt(pi)`.
    fn even_moment(m: usize) -> f64 {
        let double_fact: f64 = (1..=m).map(|j| (2 * j - 1) as f64).product();
        double_fact / 2f64.powi(m as i32) * PI.sqrt()
    }

    #[test]
    fn order_bounds() {
        assert!(gh_nodes_weights(0).is_err());
        assert!(gh_nodes_weights(101).is_err());
        assert!(gh_nodes_weights(100).is_ok());
    }

    #[test]
    fn order_one() {
        let q = gh_nodes_weights(1).unwrap();
        assert_eq!(q.nodes(), &[0.0]);
        assert_abs_diff_eq!(q.weights()[0], PI.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn order_two() {
        let q = gh_nodes_weights(2).unwrap();
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(q.nodes()[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(q.nodes()[1], r, epsilon = 1e-15);
        for w in q.weights() {
            assert_abs_diff_eq!(*w, PI.sqrt() / 2.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(q.integrate(|x| x * x), PI.sqrt() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn order_thirty_second_moment() {
        let q = gh_nodes_weights(30).unwrap();
        assert_abs_diff_eq!(q.integrate(|x| x * x), PI.sqrt() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.weights().iter().sum::<f64>(), PI.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn symmetry_and_positivity() {
        for order in [1, 2, 3, 7, 30, 31, 60, 100] {
            let q = gh_nodes_weights(order).unwrap();
            assert_eq!(q.nodes().len(), order);
            for i in 0..order {
                assert_eq!(q.nodes()[i], -q.nodes()[order - 1 - i]);
                assert_eq!(q.weights()[i], q.weights()[order - 1 - i]);
                assert!(q.weights()[i] > 0.0);
            }
            assert!(q.nodes().windows(2).all(|w| w[0] < w[1]));
            assert_abs_diff_eq!(q.weights().iter().sum::<f64>(), PI.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2k_minus_1() {
        for order in [1, 2, 5, 10, 30] {
            let q = gh_nodes_weights(order).unwrap();
            for m in 0..order {
                let exact = even_moment(m);
                let got = q.integrate(|x| x.powi(2 * m as i32));
                assert!(
                    (got - exact).abs() <= 1e-11 * exact.max(1.0),
                    "order {order}, moment {}: {got} vs {exact}",
                    2 * m
                );
                let odd = q.integrate(|x| x.powi(2 * m as i32 + 1));
                assert!(odd.abs() <= 1e-11 * exact.max(1.0));
            }
        }
    }

    #[test]
    fn weights_match_unscaled_formula() {
        // Literal form with H_(k-1) and factorials, feasible without overflow up to ~30.
        for order in [2, 5, 12, 30] {
            let q = gh_nodes_weights(order).unwrap();
            let k = order as f64;
            for (&x, &w) in q.nodes().iter().zip(q.weights()) {
                let h = hermite(order - 1, x);
                // Newton correction at the node is below round-off.
                assert!((hermite(order, x) / (2.0 * k * h)).abs() < 1e-12 * x.abs().max(1.0));
                let literal = 2f64.powi(order as i32 - 1) * factorial(order) * PI.sqrt() / (k * k * h * h);
                assert!(
                    (literal - w).abs() <= 1e-12 * w.max(1e-300) + 1e-300,
                    "order {order}: {literal} vs {w}"
                );
            }
        }
    }
}
