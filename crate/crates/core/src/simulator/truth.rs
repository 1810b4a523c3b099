use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Seedable, platform-independent random stream.
///
/// Backed by ChaCha8 (`rand_chacha`), whose output is fully specified by the
/// 64-bit seed and the stream id. Gaussian draws use the ziggurat sampler of
/// `rand_distr::StandardNormal`, which is deterministic given the stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream sharing the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Synthetic ground truth: designed scores, per-item observation noise and
/// the probability that an annotator inverts a vote.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub scores: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub error_rate: f64,
}

pub const SCORE_RANGE: (f64, f64) = (1.0, 5.0);
pub const SIGMA_RANGE: (f64, f64) = (0.0, 0.7);

impl GroundTruth {
    pub fn new(scores: Vec<f64>, sigmas: Vec<f64>, error_rate: f64) -> Result<Self> {
        if scores.len() != sigmas.len() {
            return Err(Error::invalid(format!(
                "{} scores but {} noise levels",
                scores.len(),
                sigmas.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) || sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("scores must be finite and noise levels non-negative"));
        }
        if !(0.0..1.0).contains(&error_rate) {
            return Err(Error::invalid(format!(
                "error rate must be in [0, 1), got {error_rate}"
            )));
        }
        Ok(Self {
            scores,
            sigmas,
            error_rate,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }
}

/// Scores i.i.d. uniform on [1, 5], then noise levels i.i.d. uniform on [0, 0.7].
pub fn gen_ground_truth(n: usize, error_rate: f64, rng: &mut RngStream) -> Result<GroundTruth> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 items, got {n}")));
    }
    let scores = (0..n).map(|_| rng.uniform(SCORE_RANGE.0, SCORE_RANGE.1)).collect();
    let sigmas = (0..n).map(|_| rng.uniform(SIGMA_RANGE.0, SIGMA_RANGE.1)).collect();
    GroundTruth::new(scores, sigmas, error_rate)
}

/// One simulated judgement of `i` against `j`: 1 when `i` is preferred.
///
/// Draws `r = s + sigma * z` for both items, prefers the larger (fair coin on
/// an exact tie), then inverts the outcome with probability `error_rate`.
pub fn simulate_vote(gt: &GroundTruth, i: usize, j: usize, rng: &mut RngStream) -> Result<u8> {
    let n = gt.n();
    if i >= n || j >= n {
        return Err(Error::invalid(format!("pair ({i},{j}) out of range for {n} items")));
    }
    if i == j {
        return Err(Error::invalid(format!("pair ({i},{i}) compares an item with itself")));
    }
    let ri = gt.scores[i] + gt.sigmas[i] * rng.standard_normal();
    let rj = gt.scores[j] + gt.sigmas[j] * rng.standard_normal();
    let tie_break = rng.coin();
    let mistake = rng.uniform(0.0, 1.0) < gt.error_rate;
    let preferred = if ri > rj {
        true
    } else if ri < rj {
        false
    } else {
        tie_break
    };
    Ok(u8::from(preferred != mistake))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_ranges_and_determinism() {
        for n in [2, 7, 60] {
            let gt = gen_ground_truth(n, 0.1, &mut RngStream::new(42)).unwrap();
            assert_eq!(gt.n(), n);
            assert!(gt.scores.iter().all(|s| (1.0..=5.0).contains(s)));
            assert!(gt.sigmas.iter().all(|s| (0.0..=0.7).contains(s)));
            assert_eq!(gt, gen_ground_truth(n, 0.1, &mut RngStream::new(42)).unwrap());
        }
        assert_ne!(
            gen_ground_truth(5, 0.1, &mut RngStream::new(1)).unwrap(),
            gen_ground_truth(5, 0.1, &mut RngStream::new(2)).unwrap()
        );
        assert!(gen_ground_truth(1, 0.1, &mut RngStream::new(1)).is_err());
        assert!(gen_ground_truth(4, 1.0, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn score_mean_law_of_large_numbers() {
        // sd of the mean is (4 / sqrt(12)) / 100 ~ 0.0115; 0.05 is over 4 sd.
        let gt = gen_ground_truth(10_000, 0.0, &mut RngStream::new(2024)).unwrap();
        let mean = gt.scores.iter().sum::<f64>() / 10_000.0;
        assert!((mean - 3.0).abs() < 0.05, "mean = {mean}");
    }

    #[test]
    fn noiseless_votes_follow_scores() {
        let gt = GroundTruth::new(vec![5.0, 1.0], vec![0.0, 0.0], 0.0).unwrap();
        let mut rng = RngStream::new(3);
        for _ in 0..1000 {
            assert_eq!(simulate_vote(&gt, 0, 1, &mut rng).unwrap(), 1);
            assert_eq!(simulate_vote(&gt, 1, 0, &mut rng).unwrap(), 0);
        }
        assert!(simulate_vote(&gt, 1, 1, &mut rng).is_err());
        assert!(simulate_vote(&gt, 0, 2, &mut rng).is_err());
    }

    #[test]
    fn exact_ties_use_a_fair_coin() {
        let gt = GroundTruth::new(vec![2.0, 2.0], vec![0.0, 0.0], 0.0).unwrap();
        let mut rng = RngStream::new(11);
        let wins: u32 = (0..10_000)
            .map(|_| u32::from(simulate_vote(&gt, 0, 1, &mut rng).unwrap()))
            .sum();
        assert!((wins as f64 / 1e4 - 0.5).abs() < 0.02);
    }

    #[test]
    fn equal_items_split_evenly() {
        let gt = GroundTruth::new(vec![3.0, 3.0], vec![0.4, 0.4], 0.0).unwrap();
        let mut rng = RngStream::new(5);
        let wins: u32 = (0..10_000)
            .map(|_| u32::from(simulate_vote(&gt, 0, 1, &mut rng).unwrap()))
            .sum();
        assert!((wins as f64 / 1e4 - 0.5).abs() < 0.02);
    }

    #[test]
    fn gaussian_difference_probability() {
        // P(y=1) = Phi(1 / sqrt(0.5^2 + 0.5^2)) = Phi(sqrt 2) = 0.92135...
        let gt = GroundTruth::new(vec![2.0, 1.0], vec![0.5, 0.5], 0.0).unwrap();
        let mut rng = RngStream::new(9);
        let wins: u32 = (0..10_000)
            .map(|_| u32::from(simulate_vote(&gt, 0, 1, &mut rng).unwrap()))
            .sum();
        assert!((wins as f64 / 1e4 - 0.921_350_396_474_857_4).abs() < 0.02);
    }

    #[test]
    fn inversion_rate_applies() {
        let gt = GroundTruth::new(vec![5.0, 1.0], vec![0.0, 0.0], 0.3).unwrap();
        let mut rng = RngStream::new(17);
        let wins: u32 = (0..10_000)
            .map(|_| u32::from(simulate_vote(&gt, 0, 1, &mut rng).unwrap()))
            .sum();
        assert!((wins as f64 / 1e4 - 0.7).abs() < 0.02);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a = RngStream::with_stream(7, 1);
        let mut b = RngStream::with_stream(7, 2);
        let mut a2 = RngStream::with_stream(7, 1);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xa2: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        assert_eq!(xa, xa2);
        assert_ne!(xa, xb);
    }
}
