use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{extract_analysis_set, Strategy, SurvivalSample, TrialDataset};

const MAX_ITER: usize = 25;
const SCORE_TOL: f64 = 1e-9;
const STEP_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMethod {
    #[default]
    Efron,
    Breslow,
}

/// Fitted treatment log hazard ratio for one trial under one strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub strategy: Strategy,
    pub log_hr: f64,
    pub se: f64,
    pub n_events: usize,
}

impl EstimateRecord {
    pub fn new(strategy: Strategy, log_hr: f64, se: f64, n_events: usize) -> Self {
        Self { strategy, log_hr, se, n_events }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxFit {
    pub log_hr: f64,
    pub se: f64,
    pub score: f64,
    pub information: f64,
    pub n_events: usize,
    pub iterations: usize,
}

/// Risk-set counts at one distinct event time.
#[derive(Debug, Clone, Copy)]
struct EventTime {
    at_risk_control: f64,
    at_risk_treated: f64,
    deaths_control: f64,
    deaths_treated: f64,
}

/// With one binary covariate the partial likelihood depends on the data only
/// through these counts, so every Newton iteration is linear in the number
/// of distinct event times.
fn event_table(sample: &SurvivalSample) -> Vec<EventTime> {
    let mut rows: Vec<_> = sample.rows.iter().collect();
    rows.sort_by(|a, b| b.time.total_cmp(&a.time));

    let mut table = Vec::new();
    let (mut r0, mut r1) = (0usize, 0usize);
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].time;
        let (mut d0, mut d1) = (0usize, 0usize);
        while i < rows.len() && rows[i].time == t {
            let r = rows[i];
            if r.treated {
                r1 += 1;
                d1 += r.event as usize;
            } else {
                r0 += 1;
                d0 += r.event as usize;
            }
            i += 1;
        }
        if d0 + d1 > 0 {
            table.push(EventTime {
                at_risk_control: r0 as f64,
                at_risk_treated: r1 as f64,
                deaths_control: d0 as f64,
                deaths_treated: d1 as f64,
            });
        }
    }
    table
}

#[derive(Debug, Clone, Copy)]
struct Derivatives {
    loglik: f64,
    score: f64,
    information: f64,
}

fn derivatives(table: &[EventTime], beta: f64, ties: TieMethod) -> Derivatives {
    let e = beta.exp();
    let mut out = Derivatives { loglik: 0.0, score: 0.0, information: 0.0 };
    for g in table {
        let deaths = g.deaths_control + g.deaths_treated;
        let risk_total = g.at_risk_control + g.at_risk_treated * e;
        let risk_treated = g.at_risk_treated * e;
        out.loglik += g.deaths_treated * beta;
        out.score += g.deaths_treated;
        match ties {
            TieMethod::Breslow => {
                let p = risk_treated / risk_total;
                out.loglik -= deaths * risk_total.ln();
                out.score -= deaths * p;
                out.information += deaths * p * (1.0 - p);
            }
            TieMethod::Efron => {
                let dying_total = g.deaths_control + g.deaths_treated * e;
                let dying_treated = g.deaths_treated * e;
                let d = deaths as usize;
                for l in 0..d {
                    let frac = l as f64 / deaths;
                    let s0 = risk_total - frac * dying_total;
                    let p = (risk_treated - frac * dying_treated) / s0;
                    out.loglik -= s0.ln();
                    out.score -= p;
                    out.information += p * (1.0 - p);
                }
            }
        }
    }
    out
}

/// Maximize the partial likelihood for the treatment indicator by damped
/// Newton-Raphson from zero.
pub fn cox_fit(sample: &SurvivalSample, ties: TieMethod) -> Result<CoxFit> {
    let n_events = sample.n_events();
    if n_events == 0 {
        return Err(Error::Inestimable("no events"));
    }
    let table = event_table(sample);

    // Finite maximizer exists iff some treated death has a control at risk
    // and some control death has a treated subject at risk.
    let informative_treated = table
        .iter()
        .any(|g| g.deaths_treated > 0.0 && g.at_risk_control > 0.0);
    let informative_control = table
        .iter()
        .any(|g| g.deaths_control > 0.0 && g.at_risk_treated > 0.0);
    match (informative_treated, informative_control) {
        (true, true) => {}
        (false, false) => return Err(Error::Inestimable("no risk set contains both arms")),
        _ => {
            return Err(Error::Nonconvergent(
                "monotone partial likelihood: all informative deaths in one arm".into(),
            ))
        }
    }

    let mut beta = 0.0;
    let mut d = derivatives(&table, beta, ties);
    let mut iterations = 0;
    let mut converged = d.score.abs() < SCORE_TOL;
    while !converged && iterations < MAX_ITER {
        iterations += 1;
        let newton = d.score / d.information;
        if newton.abs() < STEP_TOL {
            converged = true;
            break;
        }
        let mut step = newton;
        let mut candidate = derivatives(&table, beta + step, ties);
        let mut halvings = 0;
        // Near the optimum the log-likelihood change drops below its rounding
        // error, so a shrinking score also counts as progress.
        let improved = |c: &Derivatives| c.loglik >= d.loglik || c.score.abs() < d.score.abs();
        while !improved(&candidate) && halvings < MAX_HALVINGS {
            step *= 0.5;
            candidate = derivatives(&table, beta + step, ties);
            halvings += 1;
        }
        if !improved(&candidate) {
            break;
        }
        beta += step;
        d = candidate;
        converged = d.score.abs() < SCORE_TOL;
    }
    if !converged || !d.information.is_finite() || d.information <= 0.0 {
        return Err(Error::Nonconvergent(format!(
            "no convergence after {iterations} iterations (score {:.3e})",
            d.score
        )));
    }
    Ok(CoxFit {
        log_hr: beta,
        se: d.information.recip().sqrt(),
        score: d.score,
        information: d.information,
        n_events,
        iterations,
    })
}

/// Fit one trial under one intercurrent-event strategy.
pub fn estimate(trial: &TrialDataset, strategy: Strategy, ties: TieMethod) -> Result<EstimateRecord> {
    let sample = extract_analysis_set(trial, strategy)?;
    let fit = cox_fit(&sample, ties)?;
    Ok(EstimateRecord::new(strategy, fit.log_hr, fit.se, fit.n_events))
}
