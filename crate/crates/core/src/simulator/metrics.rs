//! Agreement metrics between estimated and designed scores.

use crate::error::{Error, Result};

/// Clamp applied before the Fisher transform so that perfect correlation
/// maps to a finite value.
pub const FISHER_CLAMP: f64 = 1.0 - 1e-12;

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("need at least 2 values"));
    }
    Ok(())
}

/// Kendall's tau-b (tie corrected), by direct pair counting.
///
/// Returns [`Error::UndefinedCorrelation`] when either input is constant.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_b) = (0i64, 0i64);
    let mut total = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            total += 1;
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                ties_a += 1;
            }
            if db == 0.0 {
                ties_b += 1;
            }
            if da == 0.0 || db == 0.0 {
                continue;
            }
            if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let denom = (((total - ties_a) as f64) * ((total - ties_b) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson linear correlation coefficient.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Plain root mean square difference.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    Ok((a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt())
}

/// Least-squares affine map `truth ~ slope * estimate + intercept`.
///
/// A constant estimate maps to the mean of `truth`.
pub fn affine_align(estimate: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    check_lengths(estimate, truth)?;
    let (me, mt) = (mean(estimate), mean(truth));
    let (mut see, mut set) = (0.0, 0.0);
    for (e, t) in estimate.iter().zip(truth) {
        see += (e - me) * (e - me);
        set += (e - me) * (t - mt);
    }
    let slope = if see == 0.0 { 0.0 } else { set / see };
    Ok(estimate.iter().map(|e| mt + slope * (e - me)).collect())
}

/// RMSE after aligning log-merit estimates to the designed score scale.
pub fn aligned_rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(&affine_align(estimate, truth)?, truth)
}

/// `arctanh(v)`, with `v` clamped to `[-FISHER_CLAMP, FISHER_CLAMP]`.
pub fn rescale_fisher(v: f64) -> f64 {
    v.clamp(-FISHER_CLAMP, FISHER_CLAMP).atanh()
}

/// `-1 / v`.
pub fn rescale_neg_inv(v: f64) -> Result<f64> {
    if v == 0.0 || !v.is_finite() {
        return Err(Error::invalid(format!("cannot rescale {v} by -1/y")));
    }
    Ok(-1.0 / v)
}

/// Percentage of the 15-round full pair comparison budget that is avoided
/// when `comparisons` votes reach the same accuracy.
pub fn saving_budget(comparisons: f64, n: usize) -> Result<f64> {
    if n < 2 || comparisons < 0.0 || !comparisons.is_finite() {
        return Err(Error::invalid(format!(
            "saving budget needs n >= 2 and a non-negative count, got n = {n}, D = {comparisons}"
        )));
    }
    let fpc15 = 15.0 * (n * (n - 1)) as f64 / 2.0;
    Ok((1.0 - comparisons / fpc15) * 100.0)
}
