//! Exact binomial confidence intervals and small summary statistics.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

/// Two-sided Clopper–Pearson interval at confidence `1 - alpha`; `(0, 1)` for
/// zero trials.
pub fn clopper_pearson(hits: u64, trials: u64, alpha: f64) -> (f64, f64) {
    assert!(hits <= trials, "need hits <= trials");
    if trials == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (hits as f64, trials as f64);
    let half = alpha / 2.0;
    let lo = if hits == 0 {
        0.0
    } else {
        // P[X >= k | p] = I_p(k, n-k+1) is increasing in p
        solve_increasing(|p| beta_reg(k, n - k + 1.0, p), half)
    };
    let hi = if hits == trials {
        1.0
    } else {
        // P[X <= k | p] = 1 - I_p(k+1, n-k) is decreasing in p
        solve_increasing(|p| beta_reg(k + 1.0, n - k, p), 1.0 - half)
    };
    (lo, hi)
}

/// Root of `f(p) = target` on `[0, 1]` for increasing `f`, by bisection.
fn solve_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut a, mut b) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Event frequency with an exact two-sided 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub event: String,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl MonteCarloEstimate {
    pub fn from_counts(
        event: impl Into<String>,
        hits: u64,
        trials: u64,
        seed: u64,
    ) -> MonteCarloEstimate {
        let (ci_low, ci_high) = clopper_pearson(hits, trials, 0.05);
        MonteCarloEstimate {
            event: event.into(),
            trials,
            hits,
            p_hat: if trials == 0 {
                0.0
            } else {
                hits as f64 / trials as f64
            },
            ci_low,
            ci_high,
            seed,
        }
    }

    pub fn from_flags(event: impl Into<String>, flags: &[bool], seed: u64) -> MonteCarloEstimate {
        let hits = flags.iter().filter(|&&b| b).count() as u64;
        MonteCarloEstimate::from_counts(event, hits, flags.len() as u64, seed)
    }

    /// Pools counts of runs of the same event; the seed of the first run is kept.
    pub fn pooled(runs: &[MonteCarloEstimate]) -> Option<MonteCarloEstimate> {
        let first = runs.first()?;
        let hits = runs.iter().map(|r| r.hits).sum();
        let trials = runs.iter().map(|r| r.trials).sum();
        Some(MonteCarloEstimate::from_counts(
            first.event.clone(),
            hits,
            trials,
            first.seed,
        ))
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    pub fn overlaps(&self, other: &MonteCarloEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Pearson correlation with a 95% Fisher-z interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Correlation {
    /// Largest absolute value inside the interval.
    pub fn abs_upper(&self) -> f64 {
        self.ci_low.abs().max(self.ci_high.abs())
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Correlation {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let (mx, _) = mean_se(xs);
    let (my, _) = mean_se(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let z = r.clamp(-0.999_999_999, 0.999_999_999).atanh();
    let half = 1.959_963_984_540_054 / ((n as f64 - 3.0).max(1.0)).sqrt();
    Correlation {
        r,
        ci_low: (z - half).tanh(),
        ci_high: (z + half).tanh(),
        n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hit_upper_bound() {
        let (lo, hi) = clopper_pearson(0, 1000, 0.05);
        assert_eq!(lo, 0.0);
        let expected = 1.0 - 0.025f64.powf(1.0 / 1000.0);
        assert!((hi - expected).abs() < 1e-9, "{hi} vs {expected}");
        assert!((hi - 3.682e-3).abs() < 1e-5);
    }

    #[test]
    fn all_hits_lower_bound() {
        let (lo, hi) = clopper_pearson(20, 20, 0.05);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(1.0 / 20.0)).abs() < 1e-9);
    }

    #[test]
    fn textbook_interval() {
        // 5 of 20: (0.0866, 0.4910)
        let (lo, hi) = clopper_pearson(5, 20, 0.05);
        assert!((lo - 0.086_570).abs() < 1e-5, "{lo}");
        assert!((hi - 0.491_046).abs() < 1e-5, "{hi}");
    }

    #[test]
    fn pooling_adds_counts() {
        let a = MonteCarloEstimate::from_counts("e", 3, 100, 1);
        let b = MonteCarloEstimate::from_counts("e", 5, 100, 2);
        let p = MonteCarloEstimate::pooled(&[a.clone(), b]).unwrap();
        assert_eq!((p.hits, p.trials), (8, 200));
        assert!(p.ci_high - p.ci_low < a.ci_high - a.ci_low);
    }

    #[test]
    fn correlation_of_identical_series() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let c = pearson(&xs, &xs);
        assert!((c.r - 1.0).abs() < 1e-12);
    }
}
