//! Rank-based tests used to compare session outcomes across conditions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

/// Combined sample size up to which Mann–Whitney p-values are exact.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Average (mid) ranks, 1-based, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of each group of tied values.
fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        out.push(j);
        i += j;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Tie-corrected statistic.
    pub chi2: f64,
    pub chi2_uncorrected: f64,
    pub df: usize,
    pub p: f64,
    pub p_uncorrected: f64,
}

/// Friedman test over an `n_subjects × k_conditions` matrix (rows are
/// subjects). Non-finite cells count as missing.
pub fn friedman_test(scores: &[Vec<f64>]) -> Result<FriedmanResult, StatsError> {
    let n = scores.len();
    if n < 2 {
        return Err(StatsError::InvalidArgument(format!(
            "need at least 2 subjects, got {n}"
        )));
    }
    let k = scores[0].len();
    if k < 2 {
        return Err(StatsError::InvalidArgument(format!(
            "need at least 2 conditions, got {k}"
        )));
    }
    for (i, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(StatsError::InvalidArgument(format!(
                "subject {i} has {} cells, expected {k}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::InvalidArgument(format!(
                "missing cell (subject {i}, condition {j})"
            )));
        }
    }

    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for row in scores {
        for (sum, r) in rank_sums.iter_mut().zip(average_ranks(row)) {
            *sum += r;
        }
        tie_term += tie_sizes(row).into_iter().map(|t| (t * t * t - t) as f64).sum::<f64>();
    }
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let chi2_uncorrected = (12.0 / (nf * kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0)).max(0.0);
    let correction = 1.0 - tie_term / (nf * (kf * kf * kf - kf));
    let chi2 = if correction > 1e-12 {
        chi2_uncorrected / correction
    } else {
        0.0
    };

    let df = k - 1;
    let dist = ChiSquared::new(df as f64).expect("df is positive");
    let tail = |x: f64| if x <= 0.0 { 1.0 } else { dist.sf(x) };
    Ok(FriedmanResult {
        chi2,
        chi2_uncorrected,
        df,
        p: tail(chi2),
        p_uncorrected: tail(chi2_uncorrected),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: PMethod,
}

/// Two-sided Mann–Whitney U test. Exact (tie-aware, by counting every
/// assignment of the pooled ranks) for `|a| + |b| ≤ 12`; otherwise normal
/// approximation with continuity and tie correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::InvalidArgument("both samples must be non-empty".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidArgument("samples must be finite".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    // doubled mid-ranks are integers
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let sum_a2: usize = doubled[..na].iter().sum();
    let u2 = sum_a2 - na * (na + 1);
    let u = u2 as f64 / 2.0;

    if na + nb <= EXACT_MAX_N {
        let p = exact_p(&doubled, na, u2);
        return Ok(MannWhitneyResult {
            u,
            p,
            method: PMethod::Exact,
        });
    }

    let n = (na + nb) as f64;
    let mean = (na * nb) as f64 / 2.0;
    let ties: f64 = tie_sizes(&pooled).into_iter().map(|t| (t * t * t - t) as f64).sum();
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        (2.0 * std_normal.sf(z)).min(1.0)
    };
    Ok(MannWhitneyResult {
        u,
        p,
        method: PMethod::Normal,
    })
}

/// Exact two-sided p: fraction of size-`na` subsets of the pooled doubled
/// ranks whose doubled U is at least as far from its mean as `u2_obs`.
fn exact_p(doubled: &[usize], na: usize, u2_obs: usize) -> f64 {
    let n = doubled.len();
    let nb = n - na;
    let max_sum: usize = doubled.iter().sum();
    // counts[m][s]: subsets of size m with doubled rank sum s
    let mut counts = vec![vec![0u64; max_sum + 1]; na + 1];
    counts[0][0] = 1;
    for &r in doubled {
        for m in (1..=na).rev() {
            for s in (r..=max_sum).rev() {
                counts[m][s] += counts[m - 1][s - r];
            }
        }
    }
    let mean2 = (na * nb) as i64;
    let dev_obs = (u2_obs as i64 - mean2).abs();
    let offset = (na * (na + 1)) as i64;
    let (mut hit, mut total) = (0u64, 0u64);
    for (s, &c) in counts[na].iter().enumerate() {
        if c == 0 {
            continue;
        }
        total += c;
        if (s as i64 - offset - mean2).abs() >= dev_obs {
            hit += c;
        }
    }
    hit as f64 / total as f64
}
