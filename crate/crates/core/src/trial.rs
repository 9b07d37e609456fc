//! Randomized two-arm trials: allocation, uniform accrual, random dropout and
//! administrative censoring, plus the analysis datasets for each
//! intercurrent-event strategy.

use std::fmt;
use std::io;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazards::exp1_quantile;
use crate::idm::{arm_hazards, open_uniform, Arm, PathSampler, TransitionHazards, WaningRule, DRAWS_PER_PATH};

/// Treatment:control allocation ratio, written `"2:1"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Allocation {
    pub treatment: u32,
    pub control: u32,
}

impl Allocation {
    pub const TWO_TO_ONE: Allocation = Allocation { treatment: 2, control: 1 };
    pub const ONE_TO_ONE: Allocation = Allocation { treatment: 1, control: 1 };

    /// `round(n * t / (t + c))`, halves rounded up, in exact integer arithmetic.
    pub fn treatment_count(&self, n: usize) -> usize {
        let t = self.treatment as u128;
        let total = t + self.control as u128;
        ((2 * n as u128 * t + total) / (2 * total)) as usize
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.treatment, self.control)
    }
}

impl FromStr for Allocation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("allocation {s:?} is not of the form T:C"));
        let (t, c) = s.split_once(':').ok_or_else(bad)?;
        let treatment: u32 = t.trim().parse().map_err(|_| bad())?;
        let control: u32 = c.trim().parse().map_err(|_| bad())?;
        if treatment == 0 || control == 0 {
            return Err(bad());
        }
        Ok(Allocation { treatment, control })
    }
}

impl TryFrom<String> for Allocation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Allocation> for String {
    fn from(a: Allocation) -> String {
        a.to_string()
    }
}

/// Timing constants shared by every trial in a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConstants {
    pub recruit_window: f64,
    pub trial_duration: f64,
    pub dropout_prob: f64,
}

impl Default for DesignConstants {
    fn default() -> Self {
        Self {
            recruit_window: 24.0,
            trial_duration: 48.0,
            dropout_prob: 0.05,
        }
    }
}

impl DesignConstants {
    pub fn trial(&self, n: usize, allocation: Allocation) -> TrialDesign {
        TrialDesign {
            n,
            allocation,
            recruit_window: self.recruit_window,
            trial_duration: self.trial_duration,
            dropout_prob: self.dropout_prob,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDesign {
    pub n: usize,
    pub allocation: Allocation,
    pub recruit_window: f64,
    pub trial_duration: f64,
    pub dropout_prob: f64,
}

impl TrialDesign {
    pub fn validate(&self) -> Result<()> {
        if !(self.recruit_window >= 0.0 && self.recruit_window <= self.trial_duration) {
            return Err(Error::InvalidDesign(format!(
                "recruit window {} must lie in [0, trial duration {}]",
                self.recruit_window, self.trial_duration
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidDesign(format!(
                "dropout probability {} must lie in [0, 1)",
                self.dropout_prob
            )));
        }
        Ok(())
    }

    /// Exponential dropout rate giving `dropout_prob` marginal dropout by
    /// the end of the trial.
    pub fn dropout_rate(&self) -> f64 {
        if self.dropout_prob == 0.0 {
            0.0
        } else {
            exp1_quantile(self.dropout_prob) / self.trial_duration
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TreatmentPolicy,
    Hypothetical,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::TreatmentPolicy, Strategy::Hypothetical];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::TreatmentPolicy => "treatment_policy",
            Strategy::Hypothetical => "hypothetical",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "treatment_policy" => Ok(Strategy::TreatmentPolicy),
            "hypothetical" => Ok(Strategy::Hypothetical),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: usize,
    pub arm: Arm,
    pub recruit_time: f64,
    pub os_time: f64,
    pub os_event: bool,
    pub switch_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    pub design: TrialDesign,
    pub patients: Vec<PatientRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRow {
    pub time: f64,
    pub event: bool,
    pub treated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurvivalSample {
    pub rows: Vec<SurvivalRow>,
}

impl SurvivalSample {
    pub fn n_events(&self) -> usize {
        self.rows.iter().filter(|r| r.event).count()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl FromIterator<SurvivalRow> for SurvivalSample {
    fn from_iter<I: IntoIterator<Item = SurvivalRow>>(iter: I) -> Self {
        Self {
            rows: iter.into_iter().collect(),
        }
    }
}

/// Randomly permuted arm labels with exactly
/// [`Allocation::treatment_count`] treatment labels.
pub fn allocate_arms<R: Rng + ?Sized>(n: usize, allocation: Allocation, rng: &mut R) -> Vec<Arm> {
    let n_treat = allocation.treatment_count(n);
    let mut arms: Vec<Arm> = std::iter::repeat_n(Arm::Treatment, n_treat)
        .chain(std::iter::repeat_n(Arm::Control, n - n_treat))
        .collect();
    arms.shuffle(rng);
    arms
}

/// Path samplers for both arms of one trial.
#[derive(Debug, Clone)]
pub struct ArmSamplers {
    treatment: PathSampler,
    control: PathSampler,
}

impl ArmSamplers {
    pub fn new(base: &TransitionHazards, beta: f64, waning: &WaningRule) -> Result<Self> {
        Ok(Self {
            treatment: PathSampler::new(arm_hazards(base, Arm::Treatment, beta, waning)?),
            control: PathSampler::new(arm_hazards(base, Arm::Control, beta, waning)?),
        })
    }

    pub fn arm(&self, arm: Arm) -> &PathSampler {
        match arm {
            Arm::Treatment => &self.treatment,
            Arm::Control => &self.control,
        }
    }
}

/// Uniforms consumed per patient after allocation: accrual, the path, dropout.
pub const DRAWS_PER_PATIENT: usize = DRAWS_PER_PATH + 2;

/// Censor one latent path at dropout and the administrative horizon.
pub(crate) fn observe(
    sampler: &PathSampler,
    design: &TrialDesign,
    dropout_rate: f64,
    patient_id: usize,
    arm: Arm,
    u: [f64; DRAWS_PER_PATIENT],
) -> PatientRecord {
    let recruit_time = u[0] * design.recruit_window;
    let path = sampler.path_from_uniforms(arm, recruit_time, [u[1], u[2], u[3]]);
    let dropout = if dropout_rate > 0.0 {
        exp1_quantile(u[4]) / dropout_rate
    } else {
        f64::INFINITY
    };
    let horizon = design.trial_duration - recruit_time;
    let censor = dropout.min(horizon);
    let (os_time, os_event) = match path.death_time {
        Some(d) if d <= censor => (d, true),
        _ => (censor, false),
    };
    PatientRecord {
        patient_id,
        arm,
        recruit_time,
        os_time,
        os_event,
        switch_time: path.switch_time.filter(|&s| s < os_time),
    }
}

/// Simulate one trial: allocation, then per patient (in id order) accrual
/// time, illness-death path, and exponential dropout.
pub fn simulate_trial<R: Rng + ?Sized>(
    arms: &ArmSamplers,
    design: &TrialDesign,
    rng: &mut R,
) -> Result<TrialDataset> {
    design.validate()?;
    let labels = allocate_arms(design.n, design.allocation, rng);
    let dropout_rate = design.dropout_rate();
    let patients = labels
        .into_iter()
        .enumerate()
        .map(|(id, arm)| {
            let u = std::array::from_fn(|_| open_uniform(rng));
            observe(arms.arm(arm), design, dropout_rate, id + 1, arm, u)
        })
        .collect();
    Ok(TrialDataset {
        design: *design,
        patients,
    })
}

/// Analysis dataset for one strategy. Under the hypothetical strategy,
/// switchers are censored at their switch time.
pub fn extract_analysis_set(trial: &TrialDataset, strategy: Strategy) -> Result<SurvivalSample> {
    if trial.patients.is_empty() {
        return Err(Error::Empty("trial has no patients"));
    }
    let sample: SurvivalSample = trial
        .patients
        .iter()
        .map(|p| {
            let treated = p.arm == Arm::Treatment;
            match (strategy, p.switch_time) {
                (Strategy::Hypothetical, Some(s)) => SurvivalRow { time: s, event: false, treated },
                _ => SurvivalRow { time: p.os_time, event: p.os_event, treated },
            }
        })
        .collect();
    if sample.n_events() == 0 {
        return Err(Error::Inestimable("analysis set has no events"));
    }
    Ok(sample)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvPatient {
    patient_id: usize,
    arm: Arm,
    recruit_time: f64,
    os_time: f64,
    os_event: u8,
    switch_time: Option<f64>,
}

/// Per-patient dump with header
/// `patient_id,arm,recruit_time,os_time,os_event,switch_time`.
pub fn write_trial_csv<W: io::Write>(trial: &TrialDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &trial.patients {
        w.serialize(CsvPatient {
            patient_id: p.patient_id,
            arm: p.arm,
            recruit_time: p.recruit_time,
            os_time: p.os_time,
            os_event: p.os_event as u8,
            switch_time: p.switch_time,
        })?;
    }
    if trial.patients.is_empty() {
        w.write_record(["patient_id", "arm", "recruit_time", "os_time", "os_event", "switch_time"])?;
    }
    w.flush().map_err(|e| Error::io("<trial csv>", e))?;
    Ok(())
}

pub fn read_trial_csv<R: io::Read>(input: R) -> Result<Vec<PatientRecord>> {
    csv::Reader::from_reader(input)
        .deserialize::<CsvPatient>()
        .map(|row| {
            let r = row?;
            Ok(PatientRecord {
                patient_id: r.patient_id,
                arm: r.arm,
                recruit_time: r.recruit_time,
                os_time: r.os_time,
                os_event: r.os_event != 0,
                switch_time: r.switch_time,
            })
        })
        .collect()
}
