//! Piecewise-constant hazard functions.
//!
//! Time is measured in months. A hazard with interior cut points
//! `c_1 < c_2 < ... < c_m` has `m + 1` rates; interval `i` is
//! `[c_i, c_{i+1})` with `c_0 = 0` and the last interval open-ended.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHazard", into = "RawHazard")]
pub struct PiecewiseHazard {
    cuts: Vec<f64>,
    rates: Vec<f64>,
    /// Cumulative hazard at the start of each interval; same length as `rates`.
    starts: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHazard {
    #[serde(default)]
    cuts: Vec<f64>,
    rates: Vec<f64>,
}

impl TryFrom<RawHazard> for PiecewiseHazard {
    type Error = Error;

    fn try_from(raw: RawHazard) -> Result<Self> {
        PiecewiseHazard::new(raw.cuts, raw.rates)
    }
}

impl From<PiecewiseHazard> for RawHazard {
    fn from(h: PiecewiseHazard) -> Self {
        RawHazard {
            cuts: h.cuts,
            rates: h.rates,
        }
    }
}

impl PiecewiseHazard {
    pub fn new(cuts: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != cuts.len() + 1 {
            return Err(Error::InvalidHazard(format!(
                "{} cuts need {} rates, got {}",
                cuts.len(),
                cuts.len() + 1,
                rates.len()
            )));
        }
        let mut previous = 0.0;
        for (i, &c) in cuts.iter().enumerate() {
            if !c.is_finite() || c <= previous {
                return Err(Error::InvalidHazard(format!(
                    "cut {i} ({c}) must be finite and exceed {previous}"
                )));
            }
            previous = c;
        }
        if let Some((i, r)) = rates
            .iter()
            .enumerate()
            .find(|(_, r)| !r.is_finite() || **r < 0.0)
        {
            return Err(Error::InvalidHazard(format!(
                "rate {i} ({r}) must be finite and non-negative"
            )));
        }

        let mut starts = Vec::with_capacity(rates.len());
        let mut acc = 0.0;
        let mut left = 0.0;
        starts.push(0.0);
        for (&c, &r) in cuts.iter().zip(&rates) {
            acc += r * (c - left);
            left = c;
            starts.push(acc);
        }
        Ok(Self { cuts, rates, starts })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![rate])
    }

    pub fn zero() -> Self {
        Self::constant(0.0).expect("zero hazard is valid")
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn tail_rate(&self) -> f64 {
        *self.rates.last().expect("at least one rate")
    }

    pub fn is_zero(&self) -> bool {
        self.rates.iter().all(|&r| r == 0.0)
    }

    /// Index of the interval containing `t` (closed-left, open-right).
    fn interval(&self, t: f64) -> usize {
        self.cuts.partition_point(|&c| c <= t)
    }

    fn interval_start(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.cuts[i - 1]
        }
    }

    /// Hazard rate at `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.rate_at(t))
    }

    pub(crate) fn rate_at(&self, t: f64) -> f64 {
        self.rates[self.interval(t)]
    }

    /// Cumulative hazard `H(t)`, summed exactly over whole intervals.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.cumulative_at(t))
    }

    pub(crate) fn cumulative_at(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            return if self.tail_rate() > 0.0 {
                f64::INFINITY
            } else {
                *self.starts.last().unwrap()
            };
        }
        let i = self.interval(t);
        let partial = self.rates[i] * (t - self.interval_start(i));
        self.starts[i] + partial
    }

    /// Smallest `t` with `H(t) = target`, or `None` when the hazard never
    /// accumulates that much.
    pub(crate) fn invert(&self, target: f64) -> Option<f64> {
        let i = self.starts.partition_point(|&s| s <= target).max(1) - 1;
        let rate = self.rates[i];
        if rate == 0.0 {
            // Only the open tail can leave the target unreached: a zero-rate
            // interior interval is skipped by the partition point.
            return None;
        }
        Some(self.interval_start(i) + (target - self.starts[i]) / rate)
    }

    /// Inverse-transform draw: solves `H(t) = -ln(1 - u)`. Consumes nothing
    /// but the supplied uniform; `Ok(None)` means the event never happens.
    pub fn sample_event_time(&self, u: f64) -> Result<Option<f64>> {
        check_uniform(u)?;
        Ok(self.invert(exp1_quantile(u)))
    }

    /// Draw the event time given survival to `start`, on the same clock:
    /// solves `H(t) - H(start) = -ln(1 - u)`.
    pub fn sample_event_time_after(&self, start: f64, u: f64) -> Result<Option<f64>> {
        check_time(start)?;
        check_uniform(u)?;
        Ok(self.invert(self.cumulative_at(start) + exp1_quantile(u)))
    }

    /// Survivor function `exp(-H(t))`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        Ok((-self.cumulative(t)?).exp())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(Error::Domain(format!("scale factor {factor} must be finite and >= 0")));
        }
        Self::new(
            self.cuts.clone(),
            self.rates.iter().map(|r| r * factor).collect(),
        )
    }

    /// Pointwise sum of two step functions over the union of their cuts.
    pub fn sum(&self, other: &Self) -> Self {
        let mut cuts: Vec<f64> = self.cuts.iter().chain(&other.cuts).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let rates = std::iter::once(0.0)
            .chain(cuts.iter().copied())
            .map(|left| self.rate_at(left) + other.rate_at(left))
            .collect();
        Self::new(cuts, rates).expect("sum of valid hazards is valid")
    }
}

/// `-ln(1 - u)`, accurate for small `u`.
pub(crate) fn exp1_quantile(u: f64) -> f64 {
    -(-u).ln_1p()
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Domain(format!("time {t} must be >= 0")));
    }
    Ok(())
}

fn check_uniform(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("uniform draw {u} outside (0, 1)")));
    }
    Ok(())
}
