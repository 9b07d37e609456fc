//! CSV schemas for grid results, raw pooled samples and side tables.

use std::fs::File;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::scenario::Dgm;
use crate::meta::PoolingMethod;
use crate::trial::{Allocation, Strategy};

pub const RESULTS_HEADER: &str = "scenario_id,dgm,pooling,beta,switching,allocation,mix_tpe,ref_estimand,true_hr,mean_hr,mean_ci_low,mean_ci_high,bias,pct2_5,pct97_5,coverage,se_bias,se_coverage,n_replicates,n_redrawn";
pub const RAW_HEADER: &str = "scenario_id,replicate,mix_tpe,pooled_hr,ci_low,ci_high,tau2";

/// One performance row: scenario × pooling × mixing × reference estimand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: String,
    pub dgm: Dgm,
    pub pooling: PoolingMethod,
    pub beta: f64,
    pub switching: f64,
    pub allocation: Allocation,
    pub mix_tpe: f64,
    pub ref_estimand: Strategy,
    pub true_hr: f64,
    pub mean_hr: f64,
    pub mean_ci_low: f64,
    pub mean_ci_high: f64,
    pub bias: f64,
    pub pct2_5: f64,
    pub pct97_5: f64,
    pub coverage: f64,
    pub se_bias: f64,
    pub se_coverage: f64,
    pub n_replicates: usize,
    pub n_redrawn: u64,
}

/// One replicate's pooled estimate at one mixing proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub scenario_id: String,
    pub replicate: u64,
    pub mix_tpe: f64,
    pub pooled_hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub tau2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub beta: f64,
    pub target: f64,
    pub scale: f64,
    pub achieved: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub scenario_id: String,
    pub beta: f64,
    pub switching: f64,
    pub allocation: Allocation,
    pub oracle_n: usize,
    pub hr_treatment_policy: f64,
    pub hr_hypothetical: f64,
    pub check_hr_treatment_policy: f64,
    pub check_hr_hypothetical: f64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub scenario_id: String,
    pub dgm: Dgm,
    pub n_replicates: usize,
    pub n_redrawn: u64,
    pub reml_nonconverged: usize,
}

pub fn write_rows<T: Serialize, W: io::Write>(rows: &[T], header: &str, out: W) -> Result<()> {
    // serde only emits the header alongside the first record.
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(header.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned, R: io::Read>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_file<T: Serialize>(path: &Path, rows: &[T], header: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(rows, header, io::BufWriter::new(file))
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows(io::BufReader::new(file))
}

pub const CALIBRATION_HEADER: &str = "beta,target,scale,achieved,iterations";
pub const TRUTH_HEADER: &str = "scenario_id,beta,switching,allocation,oracle_n,hr_treatment_policy,hr_hypothetical,check_hr_treatment_policy,check_hr_hypothetical,max_abs_diff,tolerance,stable";
pub const DIAGNOSTICS_HEADER: &str = "scenario_id,dgm,n_replicates,n_redrawn,reml_nonconverged";

/// Raw-sample file name for one scenario run under one pooling method.
pub fn raw_file_name(scenario_id: &str, dgm: Dgm, pooling: PoolingMethod) -> String {
    format!("raw_{scenario_id}_{}_{}.csv", dgm.as_str(), pooling.as_str())
}
