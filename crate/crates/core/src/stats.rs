//! Paired comparison statistics on per-query metric differences.
//!
//! * bootstrap: percentile interval of the resampled mean, quantiles by
//!   linear interpolation between order statistics;
//! * permutation: two-sided sign-flip test on the mean, exact enumeration of
//!   all `2^n` sign vectors up to `max_exact_n`, otherwise Monte Carlo with
//!   add-one smoothing `(1 + hits) / (1 + resamples)`;
//! * Holm step-down adjustment across a family of p-values.
//!
//! Resampling runs sequentially on one generator per call seeded from the
//! caller's seed, so results are a pure function of `(sample, seed)`.

use rand::Rng as _;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::scalar::Scalar;

pub const MIN_BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite difference at {0}")]
    NonFinite(usize),
    #[error("bootstrap needs at least {MIN_BOOTSTRAP_RESAMPLES} resamples, got {0}")]
    TooFewResamples(usize),
    #[error("confidence level {0} must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error("need at least 2 differences, got {0}")]
    TooFewSamples(usize),
    #[error("all differences are identical")]
    ZeroVariance,
    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),
}

/// Per-query differences `method_a - method_b`, oriented so that positive
/// values favour method A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample<T> {
    pub metric_name: String,
    pub diffs: Vec<T>,
}

impl<T: Scalar> PairedSample<T> {
    pub fn new(metric_name: impl Into<String>, diffs: Vec<T>) -> Result<Self, StatsError> {
        if diffs.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if let Some(i) = diffs.iter().position(|d| !d.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        Ok(Self {
            metric_name: metric_name.into(),
            diffs,
        })
    }

    pub fn n(&self) -> usize {
        self.diffs.len()
    }

    pub fn mean(&self) -> T {
        mean(&self.diffs)
    }
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::of(h - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean difference.
pub fn bootstrap_ci<T: Scalar>(
    sample: &PairedSample<T>,
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<(T, T), StatsError> {
    if resamples < MIN_BOOTSTRAP_RESAMPLES {
        return Err(StatsError::TooFewResamples(resamples));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel(level));
    }
    let n = sample.n();
    let mut gen = rng::seeded(seed);
    let mut means: Vec<T> = (0..resamples)
        .map(|_| {
            let s: T = (0..n).map(|_| sample.diffs[gen.random_range(0..n)]).sum();
            s / T::of_usize(n)
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&means, alpha), quantile_sorted(&means, 1.0 - alpha)))
}

/// Two-sided sign-flip permutation p-value for the mean difference.
pub fn permutation_test<T: Scalar>(sample: &PairedSample<T>, max_exact_n: usize, resamples: usize, seed: u64) -> T {
    let d = &sample.diffs;
    let n = d.len();
    let observed = d.iter().copied().sum::<T>().abs();
    // Sums over different sign patterns of equal magnitude may differ by
    // rounding; anything within this slack counts as a tie.
    let abs_total: T = d.iter().map(|x| x.abs()).sum();
    let slack = T::of_usize(n + 1) * T::epsilon() * abs_total;
    let threshold = observed - slack;

    if n <= max_exact_n && n < 63 {
        let total = 1u64 << n;
        let mut hits = 0u64;
        for mask in 0..total {
            let mut s = T::zero();
            for (i, &x) in d.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    s -= x;
                } else {
                    s += x;
                }
            }
            if s.abs() >= threshold {
                hits += 1;
            }
        }
        return T::of(hits as f64 / total as f64);
    }

    let mut gen = rng::seeded(seed);
    let mut hits = 0usize;
    for _ in 0..resamples {
        let mut s = T::zero();
        let mut bits = 0u64;
        for (i, &x) in d.iter().enumerate() {
            if i % 64 == 0 {
                bits = gen.next_u64();
            }
            if bits >> (i % 64) & 1 == 1 {
                s -= x;
            } else {
                s += x;
            }
        }
        if s.abs() >= threshold {
            hits += 1;
        }
    }
    T::of((1 + hits) as f64 / (1 + resamples) as f64)
}

/// Holm step-down adjusted p-values, in input order.
pub fn holm_correct<T: Scalar>(p_values: &[T]) -> Result<Vec<T>, StatsError> {
    if let Some(p) = p_values.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        return Err(StatsError::InvalidPValue(p.as_f64()));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap().then(a.cmp(&b)));
    let mut adjusted = vec![T::zero(); m];
    let mut running = T::zero();
    for (rank, &i) in order.iter().enumerate() {
        let v = (T::of_usize(m - rank) * p_values[i]).min(T::one());
        running = running.max(v);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// Paired Cohen's d: mean over sample standard deviation (n - 1).
pub fn cohens_d_paired<T: Scalar>(sample: &PairedSample<T>) -> Result<T, StatsError> {
    let d = &sample.diffs;
    if d.len() < 2 {
        return Err(StatsError::TooFewSamples(d.len()));
    }
    if d.iter().all(|&x| x == d[0]) {
        return Err(StatsError::ZeroVariance);
    }
    let m = mean(d);
    let var = d.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(d.len() - 1);
    Ok(m / var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinLossTie<T> {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub median_diff: T,
}

pub fn win_loss_tie<T: Scalar>(sample: &PairedSample<T>, tie_eps: T) -> WinLossTie<T> {
    let mut wins = 0;
    let mut losses = 0;
    let mut ties = 0;
    for &x in &sample.diffs {
        if x > tie_eps {
            wins += 1;
        } else if x < -tie_eps {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let mut sorted = sample.diffs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median_diff = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / T::of(2.0)
    };
    WinLossTie {
        wins,
        losses,
        ties,
        median_diff,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub level: f64,
    pub bootstrap_resamples: usize,
    pub permutation_resamples: usize,
    pub max_exact_n: usize,
    pub tie_eps: f64,
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            level: 0.95,
            bootstrap_resamples: 10_000,
            permutation_resamples: 100_000,
            max_exact_n: 20,
            tie_eps: 0.0,
            seed: 0,
        }
    }
}

/// Full paired comparison of two methods on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<T> {
    pub metric: String,
    pub n: usize,
    pub mean_diff: T,
    pub ci_low: T,
    pub ci_high: T,
    pub p_perm: T,
    /// Holm-adjusted within the comparison family; equals `p_perm` until
    /// [`apply_holm`] runs.
    pub p_holm: T,
    /// `None` when the differences have no spread or fewer than 2 values.
    pub cohens_d: Option<T>,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub median_diff: T,
}

pub fn compare<T: Scalar>(sample: &PairedSample<T>, cfg: &StatsConfig) -> Result<ComparisonReport<T>, StatsError> {
    let (ci_low, ci_high) = bootstrap_ci(sample, cfg.level, cfg.bootstrap_resamples, rng::derive_seed(cfg.seed, "bootstrap"))?;
    let p_perm = permutation_test(
        sample,
        cfg.max_exact_n,
        cfg.permutation_resamples,
        rng::derive_seed(cfg.seed, "permutation"),
    );
    let wlt = win_loss_tie(sample, T::of(cfg.tie_eps));
    Ok(ComparisonReport {
        metric: sample.metric_name.clone(),
        n: sample.n(),
        mean_diff: sample.mean(),
        ci_low,
        ci_high,
        p_perm,
        p_holm: p_perm,
        cohens_d: cohens_d_paired(sample).ok(),
        wins: wlt.wins,
        losses: wlt.losses,
        ties: wlt.ties,
        median_diff: wlt.median_diff,
    })
}

/// Replaces `p_holm` across one family of comparisons.
pub fn apply_holm<T: Scalar>(family: &mut [ComparisonReport<T>]) {
    let raw: Vec<T> = family.iter().map(|c| c.p_perm).collect();
    let adjusted = holm_correct(&raw).expect("permutation p-values lie in [0, 1]");
    for (c, p) in family.iter_mut().zip(adjusted) {
        c.p_holm = p;
    }
}
