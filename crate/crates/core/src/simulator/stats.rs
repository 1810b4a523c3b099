//! Summary statistics over repetitions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Normal quantile used for the reported 95% intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    /// Half width of the 95% interval, `Z_95 * se`.
    pub ci95: f64,
}

pub fn mean_ci(values: &[f64]) -> MeanCi {
    let n = values.len() as f64;
    if values.is_empty() {
        return MeanCi {
            mean: f64::NAN,
            se: f64::NAN,
            ci95: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    MeanCi {
        mean,
        se,
        ci95: Z_95 * se,
    }
}

/// Paired Student t-test on `a - b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_diff: f64,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a - b) > 0`.
    pub p_greater: f64,
    /// One-sided p-value for `mean(a - b) < 0`.
    pub p_less: f64,
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("paired t-test needs two samples of equal length >= 2"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let stats = mean_ci(&diffs);
    let df = (diffs.len() - 1) as f64;
    let (t, p_greater) = if stats.se == 0.0 {
        let p = if stats.mean > 0.0 {
            0.0
        } else if stats.mean < 0.0 {
            1.0
        } else {
            0.5
        };
        (stats.mean.signum() * f64::INFINITY, p)
    } else {
        let t = stats.mean / stats.se;
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
        (t, 1.0 - dist.cdf(t))
    };
    let p_less = if stats.se == 0.0 && stats.mean == 0.0 {
        0.5
    } else {
        1.0 - p_greater
    };
    Ok(PairedTTest {
        mean_diff: stats.mean,
        t,
        df,
        p_greater,
        p_less,
    })
}
