//! Error statistics and Wilcoxon rank-sum significance marking.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::positioning::{ScenarioId, ScenarioResult};
use crate::{Error, Result};

/// Root-mean-square of the errors.
pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::domain("rmse of an empty sample"));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Sample median; mean of the two middle values for even sizes.
pub fn median(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::domain("median of an empty sample"));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::domain("median of a sample containing NaN"));
    }
    let mut v = errors.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample tends to be smaller.
    Less,
    /// First sample tends to be larger.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PMethod {
    /// Exact when the pooled size is at most [`EXACT_LIMIT`].
    #[default]
    Auto,
    Exact,
    Normal,
}

/// Largest pooled sample size for which the exact null distribution is
/// enumerated automatically.
pub const EXACT_LIMIT: usize = 12;

/// Hard ceiling on explicit exact enumeration (2^24 subsets).
const EXACT_HARD_LIMIT: usize = 24;

const TIE_EPS: f64 = 1e-9;

/// Mid-ranks (1-based) of the values.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided rank-sum p-value (exact for pooled size ≤ 12).
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64> {
    wilcoxon_rank_sum_with(a, b, Alternative::TwoSided, PMethod::Auto)
}

/// Rank-sum test of `a` against `b`.
///
/// The statistic is the rank sum of `a` in the pooled sample with mid-ranks
/// for ties. The exact p-value enumerates every split of the pooled ranks;
/// the normal approximation uses the tie-corrected variance and a 0.5
/// continuity correction.
pub fn wilcoxon_rank_sum_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: PMethod,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("rank-sum test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::domain("rank-sum test on non-finite values"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = mid_ranks(&pooled);
    let n = a.len();
    let total = pooled.len();
    let w: f64 = ranks[..n].iter().sum();
    let mean = n as f64 * (total as f64 + 1.0) / 2.0;

    let exact = match method {
        PMethod::Auto => total <= EXACT_LIMIT,
        PMethod::Exact => {
            if total > EXACT_HARD_LIMIT {
                return Err(Error::domain(format!(
                    "exact enumeration limited to {EXACT_HARD_LIMIT} pooled values"
                )));
            }
            true
        }
        PMethod::Normal => false,
    };
    let p = if exact {
        exact_p(&ranks, n, w, mean, alternative)
    } else {
        normal_p(&ranks, n, w, mean, b.len(), alternative)
    };
    Ok(p.min(1.0))
}

fn exact_p(ranks: &[f64], n: usize, w: f64, mean: f64, alternative: Alternative) -> f64 {
    let total = ranks.len();
    let dev = (w - mean).abs();
    let (mut hits, mut count) = (0u64, 0u64);
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let s: f64 = (0..total)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| ranks[i])
            .sum();
        count += 1;
        let extreme = match alternative {
            Alternative::TwoSided => (s - mean).abs() >= dev - TIE_EPS,
            Alternative::Greater => s >= w - TIE_EPS,
            Alternative::Less => s <= w + TIE_EPS,
        };
        if extreme {
            hits += 1;
        }
    }
    hits as f64 / count as f64
}

fn normal_p(ranks: &[f64], n: usize, w: f64, mean: f64, m: usize, alternative: Alternative) -> f64 {
    let total = ranks.len() as f64;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n as f64 * m as f64 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    match alternative {
        Alternative::TwoSided => {
            let z = ((w - mean).abs() - 0.5).max(0.0) / sd;
            2.0 * std_normal.sf(z)
        }
        Alternative::Greater => std_normal.sf((w - mean - 0.5) / sd),
        Alternative::Less => std_normal.cdf((w - mean + 0.5) / sd),
    }
}

/// Per-scenario error statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStats {
    pub scenario: String,
    /// Error per UE in UE order; NaN where the scenario failed.
    pub errors: Vec<f64>,
    /// Over the solved UEs; NaN when none solved.
    pub rmse: f64,
    pub median: f64,
    /// p-value against the best scenario; None for the best itself.
    pub p_value: Option<f64>,
    pub significantly_worse: bool,
}

impl ScenarioStats {
    pub fn new(scenario: impl Into<String>, errors: Vec<f64>) -> Self {
        let valid: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
        Self {
            scenario: scenario.into(),
            rmse: rmse(&valid).unwrap_or(f64::NAN),
            median: median(&valid).unwrap_or(f64::NAN),
            errors,
            p_value: None,
            significantly_worse: false,
        }
    }

    fn valid(&self) -> Vec<f64> {
        self.errors
            .iter()
            .copied()
            .filter(|e| e.is_finite())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ScenarioStats>,
    /// Index of the minimum-RMSE scenario, once marked.
    pub best: Option<usize>,
    pub threshold: f64,
}

impl ErrorReport {
    pub fn new(rows: Vec<ScenarioStats>) -> Self {
        Self {
            rows,
            best: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Groups campaign results by scenario (in scenario order), errors in UE
    /// order. Failed runs contribute NaN.
    pub fn from_results(results: &[ScenarioResult]) -> Self {
        let mut by: BTreeMap<ScenarioId, BTreeMap<usize, f64>> = BTreeMap::new();
        for r in results {
            let e = if r.is_ok() { r.error } else { f64::NAN };
            by.entry(r.scenario).or_default().insert(r.ue_index, e);
        }
        Self::new(
            by.into_iter()
                .map(|(s, m)| ScenarioStats::new(s.as_str(), m.into_values().collect()))
                .collect(),
        )
    }

    pub fn row(&self, scenario: &str) -> Option<&ScenarioStats> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }

    pub fn n_ues(&self) -> usize {
        self.rows.iter().map(|r| r.errors.len()).max().unwrap_or(0)
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Flags every scenario whose errors are significantly different from the
/// minimum-RMSE scenario's (two-sided rank-sum, p < threshold).
pub fn mark_significance(report: ErrorReport, threshold: f64) -> Result<ErrorReport> {
    mark_significance_with(report, threshold, Alternative::TwoSided)
}

pub fn mark_significance_with(
    mut report: ErrorReport,
    threshold: f64,
    alternative: Alternative,
) -> Result<ErrorReport> {
    if report.rows.len() < 2 {
        return Err(Error::domain(
            "significance marking needs at least 2 scenarios",
        ));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::domain(format!(
            "threshold {threshold} outside (0, 1]"
        )));
    }
    report.threshold = threshold;
    let best = report
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.rmse.is_finite())
        .min_by(|(_, a), (_, b)| a.rmse.total_cmp(&b.rmse))
        .map(|(i, _)| i);
    report.best = best;
    let Some(best) = best else {
        return Ok(report);
    };
    let base = report.rows[best].valid();
    for (i, row) in report.rows.iter_mut().enumerate() {
        row.p_value = None;
        row.significantly_worse = false;
        if i == best {
            continue;
        }
        let sample = row.valid();
        if sample.is_empty() {
            continue;
        }
        let p = wilcoxon_rank_sum_with(&sample, &base, alternative, PMethod::Auto)?;
        row.p_value = Some(p);
        row.significantly_worse = p < threshold;
    }
    Ok(report)
}

fn cell(v: f64, mark: bool) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else if mark {
        format!("{v:.2}↓")
    } else {
        format!("{v:.2}")
    }
}

/// Fixed-width text table: one row per scenario, per-UE errors, RMSE and
/// median. Flagged scenarios carry ↓ on their RMSE and on UE errors above
/// the best scenario's worst error.
pub fn render_table(report: &ErrorReport) -> String {
    let n = report.n_ues();
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "Scenario");
    for u in 0..n {
        let _ = write!(out, "{:>9}", format!("UE{}", u + 1));
    }
    let _ = writeln!(out, "{:>9}{:>9}", "RMSE", "Median");
    for row in &report.rows {
        let label = if row.significantly_worse {
            format!("{}↓", row.scenario)
        } else {
            row.scenario.clone()
        };
        let _ = write!(out, "{label:<10}");
        for u in 0..n {
            let e = row.errors.get(u).copied().unwrap_or(f64::NAN);
            let _ = write!(out, "{:>9}", cell(e, false));
        }
        let _ = writeln!(
            out,
            "{:>9}{:>9}",
            cell(row.rmse, row.significantly_worse),
            cell(row.median, false)
        );
    }
    if let Some(b) = report.best {
        let _ = writeln!(
            out,
            "best: {}; ↓ = rank-sum p < {} against best",
            report.rows[b].scenario, report.threshold
        );
    }
    out
}
