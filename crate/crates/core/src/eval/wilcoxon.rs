//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped, tied absolute differences share their
//! midrank, and the reported statistic is `min(W+, W-)`. Up to
//! [`EXACT_MAX_N`] non-zero pairs the p-value is exact: the null
//! distribution of `W+` is counted over all `2^n` sign assignments (by
//! dynamic programming over doubled ranks, which keeps midranks integral).
//! Larger samples use the normal approximation with tie and continuity
//! corrections.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 25;
/// Largest n the exact counter accepts when forced.
const EXACT_HARD_CAP: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// `x` tends to exceed `y`.
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

pub fn wilcoxon_signed_rank(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(x, y, alternative, WilcoxonMethod::Auto)
}

/// Midranks of `values` (1-based), plus the sizes of tie groups.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
    method: WilcoxonMethod,
) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::NoEffect);
    }
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Data("non-finite paired difference".into()));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let exact = match method {
        WilcoxonMethod::Auto => n <= EXACT_MAX_N,
        WilcoxonMethod::Exact => {
            if n > EXACT_HARD_CAP {
                return Err(Error::Range(format!(
                    "exact enumeration limited to n <= {EXACT_HARD_CAP}, got {n}"
                )));
            }
            true
        }
        WilcoxonMethod::Normal => false,
    };
    let p_value = if exact {
        exact_p(&ranks, w_plus, alternative)
    } else {
        normal_p(n, &ties, w_plus, alternative)
    };
    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        n,
        p_value,
        exact,
    })
}

/// Tail probabilities of `W+` by counting sign assignments.
fn exact_p(ranks: &[f64], w_plus: f64, alternative: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    // counts[s] = number of sign assignments with 2 W+ = s
    let mut counts = vec![0u128; max + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let observed = (w_plus * 2.0).round() as usize;
    let total = 2f64.powi(ranks.len() as i32);
    let upper: u128 = counts[observed..].iter().sum();
    let lower: u128 = counts[..=observed].iter().sum();
    let p_upper = upper as f64 / total;
    let p_lower = lower as f64 / total;
    match alternative {
        Alternative::Greater => p_upper,
        Alternative::Less => p_lower,
        Alternative::TwoSided => (2.0 * p_upper.min(p_lower)).min(1.0),
    }
}

fn normal_p(n: usize, ties: &[usize], w_plus: f64, alternative: Alternative) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let sd = var.sqrt();
    let std_normal = Normal::standard();
    match alternative {
        Alternative::Greater => std_normal.sf((w_plus - mean - 0.5) / sd),
        Alternative::Less => std_normal.cdf((w_plus - mean + 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((w_plus - mean).abs() - 0.5).max(0.0) / sd;
            (2.0 * std_normal.sf(z)).min(1.0)
        }
    }
}
