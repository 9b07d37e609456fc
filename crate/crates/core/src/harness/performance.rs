//! Bias, coverage and their Monte Carlo standard errors, on the HR scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One replicate's pooled estimate, back-transformed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledDraw {
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    pub n: usize,
    pub mean_hr: f64,
    pub mean_ci_low: f64,
    pub mean_ci_high: f64,
    pub bias: f64,
    /// 2.5% and 97.5% percentiles of `hr - truth`.
    pub pct_2_5: f64,
    pub pct_97_5: f64,
    pub coverage: f64,
    pub se_bias: f64,
    pub se_coverage: f64,
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn performance(draws: &[PooledDraw], truth: f64) -> Result<PerformanceSummary> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::Domain(format!("performance needs N >= 2 replicates, got {n}")));
    }
    let nf = n as f64;
    let mean = |f: fn(&PooledDraw) -> f64| draws.iter().map(f).sum::<f64>() / nf;
    let mean_hr = mean(|d| d.hr);
    let sd = (draws.iter().map(|d| (d.hr - mean_hr).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let covered = draws
        .iter()
        .filter(|d| d.ci_low <= truth && truth <= d.ci_high)
        .count();
    let coverage = covered as f64 / nf;

    let mut diffs: Vec<f64> = draws.iter().map(|d| d.hr - truth).collect();
    diffs.sort_by(f64::total_cmp);

    Ok(PerformanceSummary {
        n,
        mean_hr,
        mean_ci_low: mean(|d| d.ci_low),
        mean_ci_high: mean(|d| d.ci_high),
        bias: mean_hr - truth,
        pct_2_5: quantile_linear(&diffs, 0.025),
        pct_97_5: quantile_linear(&diffs, 0.975),
        coverage,
        se_bias: sd / nf.sqrt(),
        se_coverage: (coverage * (1.0 - coverage) / nf).sqrt(),
    })
}
