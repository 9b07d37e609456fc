use crate::error::{Error, Result};
use crate::trial::SurvivalSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmFilter {
    All,
    Treated,
    Control,
}

impl ArmFilter {
    fn keeps(self, treated: bool) -> bool {
        match self {
            ArmFilter::All => true,
            ArmFilter::Treated => treated,
            ArmFilter::Control => !treated,
        }
    }
}

/// Product-limit survivor curve, stored at distinct event times only.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KmCurve {
    /// `S(t)`, right-continuous.
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            i => self.survival[i - 1],
        }
    }
}

/// Kaplan-Meier estimate. Subjects censored at an event time are still at
/// risk for that event.
pub fn km_curve(sample: &SurvivalSample, filter: ArmFilter) -> Result<KmCurve> {
    let mut rows: Vec<(f64, bool)> = sample
        .rows
        .iter()
        .filter(|r| filter.keeps(r.treated))
        .map(|r| (r.time, r.event))
        .collect();
    if rows.is_empty() {
        return Err(Error::Empty("no subjects pass the arm filter"));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut curve = KmCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut s = 1.0;
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let at_risk = rows.len() - i;
        let mut deaths = 0;
        while i < rows.len() && rows[i].0 == t {
            deaths += rows[i].1 as usize;
            i += 1;
        }
        if deaths > 0 {
            s *= 1.0 - deaths as f64 / at_risk as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(deaths);
        }
    }
    Ok(curve)
}

/// Smallest time with `S(t) <= 0.5`, or `None` when the curve never gets there.
pub fn median_survival(curve: &KmCurve) -> Option<f64> {
    curve
        .survival
        .iter()
        .position(|&s| s <= 0.5 + 1e-12)
        .map(|i| curve.times[i])
}
