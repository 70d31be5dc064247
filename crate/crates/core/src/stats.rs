//! Evaluation statistics: absolute error, R², Wilcoxon signed-rank test and
//! the median-centred IQR outlier rule.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size for which the signed-rank p-value is computed exactly.
pub const EXACT_WILCOXON_MAX_N: usize = 20;

/// Predictions paired with their references (m/s).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    predictions: Vec<f64>,
    references: Vec<f64>,
}

impl PairedSample {
    pub fn new(predictions: Vec<f64>, references: Vec<f64>) -> Result<Self> {
        if predictions.len() != references.len() {
            return Err(Error::Shape(format!(
                "{} predictions vs {} references",
                predictions.len(),
                references.len()
            )));
        }
        if predictions.is_empty() {
            return Err(Error::Shape("paired sample is empty".into()));
        }
        if let Some(i) = predictions.iter().chain(&references).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            predictions,
            references,
        })
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn references(&self) -> &[f64] {
        &self.references
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mean absolute error and population standard deviation of the absolute errors.
pub fn mae_std(s: &PairedSample) -> (f64, f64) {
    let abs: Vec<f64> = s
        .predictions
        .iter()
        .zip(&s.references)
        .map(|(p, r)| (p - r).abs())
        .collect();
    (mean(&abs), std_dev(&abs))
}

/// `1 − Σ(p − r)² / Σ(r − mean r)²`.
pub fn r_squared(s: &PairedSample) -> Result<f64> {
    let mr = mean(&s.references);
    let ss_tot: f64 = s.references.iter().map(|r| (r - mr) * (r - mr)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("references have zero variance".into()));
    }
    let ss_res: f64 = s
        .predictions
        .iter()
        .zip(&s.references)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub significant: bool,
    pub method: PValueMethod,
}

/// Ranks of `values` (1-based), ties receiving the average rank, doubled so
/// that every rank is an integer.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank (i+1 + j+1)/2; doubled: i + j + 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments whose positive rank sum (doubled) is at most `limit`.
fn count_at_most(ranks2: &[u64], limit: u64) -> f64 {
    let total: u64 = ranks2.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0.0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    counts[..=(limit as usize).min(total as usize)].iter().sum()
}

/// Paired two-sided Wilcoxon signed-rank test of `a` against `b`.
///
/// Zero differences are dropped. For `n ≤ 20` the p-value is exact (counts
/// over all `2ⁿ` sign assignments of the observed, possibly tied, ranks);
/// above that a normal approximation with tie and continuity correction
/// is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alpha: f64) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} observations", a.len(), b.len())));
    }
    if let Some(i) = a.iter().chain(b).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_ranks(&abs);
    let plus2: u64 = diffs.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = ranks2.iter().sum();
    let minus2 = total2 - plus2;
    let stat2 = plus2.min(minus2);

    let (p, method) = if n <= EXACT_WILCOXON_MAX_N {
        let tail = count_at_most(&ranks2, stat2) / 2f64.powi(n as i32);
        ((2.0 * tail).min(1.0), PValueMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let w = stat2 as f64 / 2.0;
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * (1.0 - normal.cdf(z))).min(1.0)
        };
        (p, PValueMethod::NormalApproximation)
    };
    Ok(WilcoxonResult {
        statistic: stat2 as f64 / 2.0,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        n,
        p_value: p,
        significant: p < alpha,
        method,
    })
}

/// Sample quantile by linear interpolation of order statistics (R type 7).
pub fn quantile_type7(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_type7(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummary {
    pub indices: Vec<usize>,
    pub percentage: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Points farther than `1.5 · IQR` from the median (strictly).
pub fn iqr_outliers(values: &[f64]) -> Result<OutlierSummary> {
    if values.len() < 4 {
        return Err(Error::Shape(format!(
            "outlier rule needs at least 4 values, got {}",
            values.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_type7(&sorted, 0.25);
    let q3 = quantile_type7(&sorted, 0.75);
    let med = quantile_type7(&sorted, 0.5);
    let fence = 1.5 * (q3 - q1);
    let indices: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v - med).abs() > fence)
        .map(|(i, _)| i)
        .collect();
    Ok(OutlierSummary {
        percentage: 100.0 * indices.len() as f64 / values.len() as f64,
        indices,
        median: med,
        q1,
        q3,
    })
}

/// Outcome of one pairwise group comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: usize,
    pub second: usize,
    /// `1.0` when the comparison is degenerate.
    pub p_value: f64,
    pub significant: bool,
    /// All paired differences were zero: the groups are not separable.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub group_count: usize,
    pub alpha: f64,
    pub pairs: Vec<PairComparison>,
}

impl Separability {
    pub fn all_significant(&self) -> bool {
        self.pairs.iter().all(|p| p.significant)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&PairComparison> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.pairs.iter().find(|p| p.first == a && p.second == b)
    }
}

/// Signed-rank test between every pair of groups, paired by repetition index.
pub fn group_separability(groups: &[Vec<f64>], alpha: f64) -> Result<Separability> {
    if groups.len() < 2 {
        return Err(Error::Shape("separability needs at least two groups".into()));
    }
    let len = groups[0].len();
    if groups.iter().any(|g| g.len() != len) {
        return Err(Error::Shape(
            "groups differ in length; repetition pairing is undefined".into(),
        ));
    }
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let cmp = match wilcoxon_signed_rank(&groups[i], &groups[j], alpha) {
                Ok(w) => PairComparison {
                    first: i,
                    second: j,
                    p_value: w.p_value,
                    significant: w.significant,
                    degenerate: false,
                },
                Err(Error::Degenerate(_)) => PairComparison {
                    first: i,
                    second: j,
                    p_value: 1.0,
                    significant: false,
                    degenerate: true,
                },
                Err(e) => return Err(e),
            };
            pairs.push(cmp);
        }
    }
    Ok(Separability {
        group_count: groups.len(),
        alpha,
        pairs,
    })
}
